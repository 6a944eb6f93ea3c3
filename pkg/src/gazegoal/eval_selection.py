"""Goal-selection metrics over the three span conditions.

Three accuracies are reported:

* ``all``: exact three-way match;
* ``different_spans``: the induced binary decision between the question
  with its own span and the pair sharing the second span: correct when
  the predicted question's span equals the true question's span;
* ``same_span``: restricted to trials whose true question is one of the
  shared-span pair; a prediction is correct only when it names the true
  question, and predicting the distinct-span question counts as wrong
  (it stays in the denominator).

Chance levels under uniform prediction are derived by enumerating the
3x3 truth/prediction grid: 3/9, 5/9 (the Monty-Hall effect of grouping
two questions under one span), and 2/4.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import pandas as pd

from .bootstrap import cluster_bootstrap_ci
from .corpus.types import REGIMES

CONDITIONS = ("all", "different_spans", "same_span")


@dataclass(frozen=True)
class SelectionRecord:
    trial_key: tuple[str, ...]
    participant_id: str
    paragraph_key: tuple[str, str, str]
    true_type: int
    predicted_type: int
    probabilities: dict[int, float] | None = None
    regime: str | None = None


@dataclass(frozen=True)
class ChanceTable:
    all: Fraction
    different_spans: Fraction
    same_span: Fraction

    def as_floats(self) -> dict[str, float]:
        return {
            "all": float(self.all),
            "different_spans": float(self.different_spans),
            "same_span": float(self.same_span),
        }


def _span_group(type_index: int) -> int:
    # q1 owns the first critical span; q2 and q3 share the second
    return 0 if type_index == 1 else 1


def chance_by_enumeration() -> ChanceTable:
    """Enumerate uniform predictions against each truth for all three
    success maps."""
    types = (1, 2, 3)
    all_hits = sum(1 for t in types for p in types if p == t)
    diff_hits = sum(1 for t in types for p in types if _span_group(p) == _span_group(t))
    same_truths = (2, 3)
    same_preds = (2, 3)
    same_hits = sum(1 for t in same_truths for p in same_preds if p == t)
    return ChanceTable(
        all=Fraction(all_hits, 9),
        different_spans=Fraction(diff_hits, 9),
        same_span=Fraction(same_hits, len(same_truths) * len(same_preds)),
    )


def _success(records: list[SelectionRecord], condition: str,
             same_span_renormalize: bool) -> tuple[np.ndarray, list[SelectionRecord]]:
    if condition == "all":
        return (
            np.array([r.predicted_type == r.true_type for r in records], dtype=float),
            records,
        )
    if condition == "different_spans":
        return (
            np.array(
                [_span_group(r.predicted_type) == _span_group(r.true_type)
                 for r in records],
                dtype=float,
            ),
            records,
        )
    if condition == "same_span":
        subset = [r for r in records if r.true_type in (2, 3)]
        vals = []
        for r in subset:
            pred = r.predicted_type
            if same_span_renormalize and r.probabilities:
                pred = max(
                    (2, 3), key=lambda t: (r.probabilities.get(t, 0.0), -t)
                )
            vals.append(float(pred == r.true_type))
        return np.array(vals, dtype=float), subset
    raise ValueError(f"unknown condition {condition!r}")


def selection_metrics(
    records: list[SelectionRecord],
    by_regime: bool = True,
    same_span_renormalize: bool = False,
    n_boot: int = 1000,
    seed: int = 0,
) -> pd.DataFrame:
    """Accuracy table with 95% cluster-bootstrap CIs, per regime and pooled."""
    if not records:
        raise ValueError("no selection records to evaluate")
    for r in records:
        if r.predicted_type not in (1, 2, 3):
            raise ValueError(f"record {r.trial_key}: prediction must be in 1..3")

    regime_groups: dict[str, list[SelectionRecord]] = {"pooled": list(records)}
    if by_regime:
        for reg in REGIMES:
            regime_groups[reg] = [r for r in records if r.regime == reg]

    rows = []
    for condition in CONDITIONS:
        for regime, group in regime_groups.items():
            vals, subset = _success(group, condition, same_span_renormalize)
            if vals.size == 0:
                rows.append({"condition": condition, "regime": regime, "n": 0,
                             "accuracy": float("nan"),
                             "ci_low": float("nan"), "ci_high": float("nan")})
                continue
            parts = np.array([r.participant_id for r in subset])
            paras = np.array(["|".join(r.paragraph_key) for r in subset])
            lo, hi = cluster_bootstrap_ci(parts, paras, vals, n_boot=n_boot, seed=seed)
            rows.append({
                "condition": condition, "regime": regime, "n": int(vals.size),
                "accuracy": float(vals.mean()), "ci_low": lo, "ci_high": hi,
            })
    return pd.DataFrame(rows)


def accuracy_only(records: list[SelectionRecord],
                  same_span_renormalize: bool = False) -> dict[str, float]:
    """The three pooled accuracies without bootstrap (fast path for tests)."""
    out = {}
    for condition in CONDITIONS:
        vals, _ = _success(records, condition, same_span_renormalize)
        out[condition] = float(vals.mean()) if vals.size else float("nan")
    return out


def write_selection_report(df: pd.DataFrame, path) -> None:
    df.to_csv(path, sep="\t", index=False)

"""Structured 10-fold cross-validation with three generalization regimes.

Participants and articles are each partitioned into ten seeded blocks.
Fold ``k`` holds out participant/article block ``k`` for the test set and
block ``k+1`` for the validation set; a trial is evaluated when its
participant or article is held out, and its regime follows the held-out
axis (participant only -> new_participant, article only -> new_text, both
-> new_text_and_participant). Everything else is training data.

On a corpus where every participant reads every paragraph and blocks
divide evenly, this yields per-fold proportions 64/17/19 with test
regimes 9/9/1, and across folds every trial appears exactly once in each
of new-participant and new-text test evaluation (or exactly once in
new-text-and-participant when its two block indices coincide): the
90/90/10 aggregate. Held-out participants and articles never contribute
a single training trial, so the leakage guarantees are strict.

Participant blocks are dealt per counterbalancing phase so every block
receives a near-even mix of question-type assignment phases, which keeps
the per-paragraph question-type counts of every partition within one of
each other.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .corpus.types import (
    REGIME_NEW_BOTH,
    REGIME_NEW_PARTICIPANT,
    REGIME_NEW_TEXT,
    Corpus,
    Trial,
)

N_FOLDS = 10


class SplitError(ValueError):
    """Raised when a corpus cannot satisfy the split constraints."""


@dataclass
class FoldPlan:
    fold_id: int
    assignment: dict[tuple, str]            # trial key -> train | val | test
    regime: dict[tuple, str]                # eval trial key -> regime
    test_participants: frozenset[str] = field(default_factory=frozenset)
    val_participants: frozenset[str] = field(default_factory=frozenset)
    test_articles: frozenset[str] = field(default_factory=frozenset)
    val_articles: frozenset[str] = field(default_factory=frozenset)

    def partition_counts(self) -> Counter:
        return Counter(self.assignment.values())

    def trials_in(self, partition: str) -> list[tuple]:
        return [k for k, v in self.assignment.items() if v == partition]


def _participant_phase(corpus: Corpus) -> dict[str, int]:
    """Estimate each participant's counterbalancing phase from their
    question-type assignments relative to a canonical paragraph order."""
    rank = {key: i for i, key in enumerate(sorted(corpus.paragraphs))}
    votes: dict[str, Counter] = {}
    for t in corpus.trials:
        phase = (t.question.type_index - 1 - rank[t.paragraph.key]) % 3
        votes.setdefault(t.participant_id, Counter())[phase] += 1
    return {
        p: min(c.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        for p, c in votes.items()
    }


def _deal_participant_blocks(
    corpus: Corpus, rng: np.random.Generator
) -> list[list[str]]:
    phases = _participant_phase(corpus)
    by_phase = {ph: sorted(p for p, q in phases.items() if q == ph)
                for ph in (0, 1, 2)}
    blocks: list[list[str]] = [[] for _ in range(N_FOLDS)]
    leftovers: list[list[str]] = []
    for ph in sorted(by_phase, key=lambda ph: (-len(by_phase[ph]), ph)):
        members = by_phase[ph]
        members = [members[i] for i in rng.permutation(len(members))]
        base = len(members) // N_FOLDS
        for b in range(N_FOLDS):
            blocks[b].extend(members[b * base : (b + 1) * base])
        leftovers.append(members[N_FOLDS * base :])
    # interleave leftovers across phases so that consecutive blocks (which
    # become a fold's test and val participant sets) rarely carry an extra
    # of the same phase; this keeps the training split's per-paragraph
    # question-type counts within one of each other
    dealt = 0
    while any(leftovers):
        for lst in leftovers:
            if lst:
                blocks[dealt % N_FOLDS].append(lst.pop(0))
                dealt += 1
    return blocks


def _spread(counts: np.ndarray) -> int:
    return int(counts.max() - counts.min())


def _balanced_compositions(size: int) -> list[np.ndarray]:
    """All 3-phase compositions of ``size`` whose counts differ by <= 1."""
    base, extra = divmod(size, 3)
    comps = set()
    if extra == 0:
        comps.add((base, base, base))
    else:
        from itertools import combinations

        for hot in combinations(range(3), extra):
            c = [base] * 3
            for h in hot:
                c[h] += 1
            comps.add(tuple(c))
    return [np.array(c) for c in sorted(comps, reverse=True)]


def _pick_val_block(
    totals: np.ndarray,
    t_comp: np.ndarray,
    by_phase: dict[int, list[str]],
    excluded: set[str],
    use_count: dict[str, int],
    size: int,
) -> list[str]:
    """Choose a val holdout whose phase composition keeps the remaining
    training phase counts (and hence per-paragraph question-type counts)
    as balanced as possible. Val holdouts may repeat across folds."""
    avail = {
        ph: [p for p in members if p not in excluded]
        for ph, members in by_phase.items()
    }
    best_comp = None
    best_key = None
    for comp in _balanced_compositions(size):
        if any(comp[ph] > len(avail[ph]) for ph in range(3)):
            continue
        key = _spread(totals - t_comp - comp)
        if best_key is None or key < best_key:
            best_key, best_comp = key, comp
    if best_comp is None:  # tiny corpora: take whoever is available
        pool = sorted(set().union(*avail.values()) if avail else set())
        pool.sort(key=lambda p: use_count[p])
        return pool[:size]
    picked = []
    for ph in range(3):
        pool = sorted(avail[ph], key=lambda p: (use_count[p], p))
        picked.extend(pool[: int(best_comp[ph])])
    return picked


def make_folds(corpus: Corpus, seed: int) -> list[FoldPlan]:
    """Build the ten fold plans. Deterministic for a given corpus and seed."""
    articles = corpus.articles
    participants = corpus.participants
    if len(articles) < 2:
        raise SplitError("need at least 2 articles to build article-level splits")
    if len(participants) < 2:
        raise SplitError("need at least 2 participants to build splits")

    rng = np.random.default_rng(seed)
    phases = _participant_phase(corpus)
    t_blocks = _deal_participant_blocks(corpus, rng)
    shuffled_articles = [articles[i] for i in rng.permutation(len(articles))]
    a_blocks = [[str(a) for a in b] for b in np.array_split(shuffled_articles, N_FOLDS)]

    # seeded priority randomizes ties in val-holdout selection
    priority_order = [participants[i] for i in rng.permutation(len(participants))]
    use_count = {p: i / (len(participants) + 1) for i, p in enumerate(priority_order)}
    by_phase = {ph: sorted(p for p, q in phases.items() if q == ph)
                for ph in range(3)}
    totals = np.array([len(by_phase[ph]) for ph in range(3)])

    folds = []
    for k in range(N_FOLDS):
        p_test = frozenset(t_blocks[k])
        a_test = frozenset(a_blocks[k])
        a_val = frozenset(a_blocks[(k + 1) % N_FOLDS])
        t_comp = np.array([sum(1 for p in p_test if phases[p] == ph)
                           for ph in range(3)])

        p_val = frozenset(_pick_val_block(
            totals, t_comp, by_phase, set(p_test), use_count, len(p_test)
        ))
        for p in p_val:
            use_count[p] += 1

        # paragraphs of val-held articles are read in this fold by everyone
        # outside the test block; when that reader set is phase-imbalanced,
        # move the excess readers' val-article trials into the test set (as
        # new-text trials: the article is unseen in training either way)
        cell = totals - t_comp
        reroute_phases: list[int] = []
        while _spread(cell) > 1:
            j = int(np.argmax(cell))
            cell[j] -= 1
            reroute_phases.append(j)
        next_test = set(t_blocks[(k + 1) % N_FOLDS])
        rerouted: set[str] = set()
        for ph in reroute_phases:
            pool = [p for p in by_phase[ph]
                    if p not in p_test and p not in p_val
                    and p not in next_test and p not in rerouted]
            pool.sort(key=lambda p: (use_count[p], p))
            if pool:
                rerouted.add(pool[0])
                use_count[pool[0]] += 1

        assignment: dict[tuple, str] = {}
        regime: dict[tuple, str] = {}
        for t in corpus.trials:
            key = t.key
            p, a = t.participant_id, t.paragraph.article_id
            if p in p_test or a in a_test:
                assignment[key] = "test"
                regime[key] = _regime_label(p in p_test, a in a_test)
            elif a in a_val and p in rerouted:
                assignment[key] = "test"
                regime[key] = REGIME_NEW_TEXT
            elif p in p_val or a in a_val:
                assignment[key] = "val"
                regime[key] = _regime_label(p in p_val, a in a_val)
            else:
                assignment[key] = "train"
        folds.append(
            FoldPlan(
                fold_id=k,
                assignment=assignment,
                regime=regime,
                test_participants=p_test,
                val_participants=p_val,
                test_articles=a_test,
                val_articles=a_val,
            )
        )
    return folds


def _regime_label(p_new: bool, a_new: bool) -> str:
    if p_new and a_new:
        return REGIME_NEW_BOTH
    if p_new:
        return REGIME_NEW_PARTICIPANT
    return REGIME_NEW_TEXT


def regime_of(trial: Trial, fold: FoldPlan) -> tuple[str, str | None]:
    """(partition, regime) of a trial under a fold plan; regime is None in train."""
    key = trial.key
    if key not in fold.assignment:
        raise SplitError(f"trial {key} is not covered by fold {fold.fold_id}")
    part = fold.assignment[key]
    return part, fold.regime.get(key)


def fold_frame(fold: FoldPlan) -> pd.DataFrame:
    rows = []
    for key, part in sorted(fold.assignment.items()):
        participant_id, article_id, paragraph_id, difficulty, question_id = key
        rows.append({
            "participant_id": participant_id,
            "article_id": article_id,
            "paragraph_id": paragraph_id,
            "difficulty_level": difficulty,
            "question_id": question_id,
            "partition": part,
            "regime": fold.regime.get(key, ""),
        })
    return pd.DataFrame(rows)


def write_folds(folds: list[FoldPlan], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for fold in folds:
        path = out_dir / f"fold_{fold.fold_id}.tsv"
        fold_frame(fold).to_csv(path, sep="\t", index=False)
        paths.append(path)
    return paths


def load_fold(path: str | Path) -> FoldPlan:
    """Reload a fold plan from its TSV.

    Assignment and regimes round-trip exactly; the held-out block sets are
    reconstructed from regime labels and may over-include articles whose
    readers were rerouted (they are diagnostic only, the plan's authority
    is ``assignment``/``regime``).
    """
    df = pd.read_csv(path, sep="\t", keep_default_na=False,
                     dtype={"participant_id": str, "article_id": str,
                            "paragraph_id": str, "question_id": str})
    fold_id = int(Path(path).stem.split("_")[-1])
    assignment, regime = {}, {}
    for row in df.itertuples(index=False):
        key = (str(row.participant_id), str(row.article_id), str(row.paragraph_id),
               str(row.difficulty_level), str(row.question_id))
        assignment[key] = row.partition
        if row.regime:
            regime[key] = row.regime
    test_p = {k[0] for k, v in assignment.items()
              if v == "test" and regime.get(k) != REGIME_NEW_TEXT}
    val_p = {k[0] for k, v in assignment.items()
             if v == "val" and regime.get(k) != REGIME_NEW_TEXT}
    test_a = {k[1] for k, v in assignment.items()
              if v == "test" and regime.get(k) != REGIME_NEW_PARTICIPANT}
    val_a = {k[1] for k, v in assignment.items()
             if v == "val" and regime.get(k) != REGIME_NEW_PARTICIPANT}
    return FoldPlan(
        fold_id=fold_id,
        assignment=assignment,
        regime=regime,
        test_participants=frozenset(test_p),
        val_participants=frozenset(val_p),
        test_articles=frozenset(test_a),
        val_articles=frozenset(val_a),
    )

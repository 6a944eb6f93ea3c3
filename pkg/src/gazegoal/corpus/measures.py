"""Word-level reading measures aggregated from a trial's fixation sequence.

Definitions follow standard interest-area report conventions:

* a *run* is a maximal block of consecutive fixations on the same word;
* *first pass* for word ``w`` covers fixations before any fixation on a
  word with a higher index;
* regressions are transitions to a lower word index.

Off-text fixations are excluded from aggregation (they still count toward
the trial's fixation total used for ``fixation_pct``). Run and regression
structure is computed on the on-text subsequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from .types import OFF_TEXT, Trial


@dataclass
class WordMeasures:
    """Per-word measure arrays for one trial (row i = word i)."""

    trial_key: tuple[str, ...]
    n_words: int
    dwell_time_ms: np.ndarray
    dwell_time_pct: np.ndarray
    fixation_pct: np.ndarray
    fixation_count: np.ndarray
    run_count: np.ndarray
    first_fixation_duration: np.ndarray
    first_run_dwell_time: np.ndarray
    first_run_fixation_count: np.ndarray
    last_fixation_duration: np.ndarray
    last_run_dwell_time: np.ndarray
    last_run_fixation_count: np.ndarray
    skip: np.ndarray
    first_fix_progressive: np.ndarray
    regression_in_count: np.ndarray
    regression_out_count: np.ndarray
    regression_out_full_count: np.ndarray
    regression_path_duration: np.ndarray
    selective_regression_path_duration: np.ndarray
    first_fixation_visited_ia_count: np.ndarray
    normalized_word_id: np.ndarray
    total_skip: np.ndarray
    all_skip_trial: bool  # no on-text fixation at all (diagnostic, not an error)

    FIELD_NAMES = (
        "dwell_time_ms", "dwell_time_pct", "fixation_pct", "fixation_count",
        "run_count", "first_fixation_duration", "first_run_dwell_time",
        "first_run_fixation_count", "last_fixation_duration",
        "last_run_dwell_time", "last_run_fixation_count", "skip",
        "first_fix_progressive", "regression_in_count", "regression_out_count",
        "regression_out_full_count", "regression_path_duration",
        "selective_regression_path_duration", "first_fixation_visited_ia_count",
        "normalized_word_id", "total_skip",
    )

    def as_matrix(self) -> np.ndarray:
        """All measures stacked as a float matrix (n_words x n_fields)."""
        return np.column_stack(
            [np.asarray(getattr(self, f), dtype=np.float64) for f in self.FIELD_NAMES]
        )


def aggregate_word_measures(trial: Trial) -> WordMeasures:
    """Compute all word-level reading measures for one trial.

    Pure: identical trials produce identical measures. A trial with zero
    on-text fixations yields all-skip measures with ``all_skip_trial`` set.
    """
    n_words = trial.paragraph.n_words
    words_all = trial.word_indices
    durs_all = trial.durations
    on = words_all != OFF_TEXT
    words = words_all[on]
    durs = durs_all[on]

    (dwell, fix_count, run_count, first_fix_dur, last_fix_dur,
     first_run_dwell, first_run_count, last_run_dwell, last_run_count,
     first_pass_count, progressive, reg_in, reg_out, reg_out_full,
     gopast, gopast_sel, visited_before) = kernels.aggregate_fixations(
        words, durs, n_words
    )

    # trial time denominator: reported paragraph RT when present, otherwise
    # total fixation time (off-text included), so that pct mass stays <= 1
    total_fix_time = float(durs_all.sum())
    denom = trial.paragraph_rt_ms if trial.paragraph_rt_ms > 0 else total_fix_time
    denom = max(denom, total_fix_time)
    dwell_pct = dwell / denom if denom > 0 else np.zeros(n_words)
    n_fix_all = len(words_all)
    fix_pct = fix_count / n_fix_all if n_fix_all > 0 else np.zeros(n_words)

    if n_words > 1:
        norm_id = np.arange(n_words, dtype=np.float64) / (n_words - 1)
    else:
        norm_id = np.zeros(1, dtype=np.float64)

    return WordMeasures(
        trial_key=trial.key,
        n_words=n_words,
        dwell_time_ms=dwell,
        dwell_time_pct=dwell_pct,
        fixation_pct=fix_pct,
        fixation_count=fix_count,
        run_count=run_count,
        first_fixation_duration=first_fix_dur,
        first_run_dwell_time=first_run_dwell,
        first_run_fixation_count=first_run_count,
        last_fixation_duration=last_fix_dur,
        last_run_dwell_time=last_run_dwell,
        last_run_fixation_count=last_run_count,
        skip=first_pass_count == 0,
        first_fix_progressive=progressive,
        regression_in_count=reg_in,
        regression_out_count=reg_out,
        regression_out_full_count=reg_out_full,
        regression_path_duration=gopast,
        selective_regression_path_duration=gopast_sel,
        first_fixation_visited_ia_count=visited_before,
        normalized_word_id=norm_id,
        total_skip=fix_count == 0,
        all_skip_trial=bool(words.size == 0),
    )

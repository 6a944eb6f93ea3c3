"""Hot aggregation kernels over fixation sequences.

The per-trial reading-measure aggregation is the inner loop of ingestion:
a full corpus means millions of fixations pushed through run/first-pass/
regression state machines. Kernels are compiled with numba when available;
set ``GAZEGOAL_NO_NUMBA=1`` to force the pure-numpy path (used as the
reference in tests and the benchmark).

All kernels consume the on-text fixation subsequence only: callers drop
off-text (sentinel) fixations first. Word order relations ("higher",
"lower") are in interest-area index order.
"""

from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("GAZEGOAL_NO_NUMBA", "") not in ("", "0")

try:
    if _FORCE_NUMPY:
        raise ImportError
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


def backend() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return "numba" if _HAVE_NUMBA else "numpy"


# Measure tuple layout returned by the aggregation kernels, in order:
#  0 dwell            float  total fixation duration on the word
#  1 fix_count        int    number of fixations on the word
#  2 run_count        int    maximal consecutive fixation blocks on the word
#  3 first_fix_dur    float  duration of the first fixation on the word
#  4 last_fix_dur     float  duration of the last fixation on the word
#  5 first_run_dwell  float
#  6 first_run_count  int
#  7 last_run_dwell   float
#  8 last_run_count   int
#  9 first_pass_count int    fixations on the word before any higher word
# 10 progressive      bool   first fixation on the word was first-pass
# 11 reg_in           int    entries from a higher word
# 12 reg_out          int    exits to a lower word before any higher word was fixated
# 13 reg_out_full     int    all exits to a lower word
# 14 gopast           float  fixation time from first entering the word until
#                            the first fixation on a higher word (on any word)
# 15 gopast_selective float  same window, fixations on the word only
# 16 visited_before   int    distinct words fixated before first fixation here


def _aggregate_loop(words, durs, n_words):
    m = words.shape[0]
    dwell = np.zeros(n_words, np.float64)
    fix_count = np.zeros(n_words, np.int64)
    run_count = np.zeros(n_words, np.int64)
    first_fix_dur = np.zeros(n_words, np.float64)
    last_fix_dur = np.zeros(n_words, np.float64)
    first_run_dwell = np.zeros(n_words, np.float64)
    first_run_count = np.zeros(n_words, np.int64)
    last_run_dwell = np.zeros(n_words, np.float64)
    last_run_count = np.zeros(n_words, np.int64)
    first_pass_count = np.zeros(n_words, np.int64)
    progressive = np.zeros(n_words, np.bool_)
    reg_in = np.zeros(n_words, np.int64)
    reg_out = np.zeros(n_words, np.int64)
    reg_out_full = np.zeros(n_words, np.int64)
    gopast = np.zeros(n_words, np.float64)
    gopast_sel = np.zeros(n_words, np.float64)
    visited_before = np.zeros(n_words, np.int64)

    first_idx = np.full(n_words, -1, np.int64)
    distinct_seen = 0
    running_max = -1
    for i in range(m):
        w = words[i]
        d = durs[i]
        dwell[w] += d
        fix_count[w] += 1
        last_fix_dur[w] = d
        if first_idx[w] < 0:
            first_idx[w] = i
            first_fix_dur[w] = d
            visited_before[w] = distinct_seen
            distinct_seen += 1
            progressive[w] = running_max <= w
        if running_max <= w:
            # first-pass fixation: no higher word fixated yet
            first_pass_count[w] += 1
        if i > 0:
            prev = words[i - 1]
            if prev != w:
                if prev > w:
                    reg_in[w] += 1
                    reg_out_full[prev] += 1
                    if running_max <= prev:
                        reg_out[prev] += 1
        if w > running_max:
            running_max = w

    # runs: maximal consecutive blocks sharing a word index
    i = 0
    while i < m:
        w = words[i]
        j = i
        rd = 0.0
        while j < m and words[j] == w:
            rd += durs[j]
            j += 1
        rc = j - i
        run_count[w] += 1
        if run_count[w] == 1:
            first_run_dwell[w] = rd
            first_run_count[w] = rc
        last_run_dwell[w] = rd
        last_run_count[w] = rc
        i = j

    # go-past windows, per fixated word
    for w in range(n_words):
        s = first_idx[w]
        if s < 0:
            continue
        acc = 0.0
        acc_sel = 0.0
        for i in range(s, m):
            if words[i] > w:
                break
            acc += durs[i]
            if words[i] == w:
                acc_sel += durs[i]
        gopast[w] = acc
        gopast_sel[w] = acc_sel

    return (
        dwell, fix_count, run_count, first_fix_dur, last_fix_dur,
        first_run_dwell, first_run_count, last_run_dwell, last_run_count,
        first_pass_count, progressive, reg_in, reg_out, reg_out_full,
        gopast, gopast_sel, visited_before,
    )


if _HAVE_NUMBA:
    _aggregate_loop_jit = njit(cache=True)(_aggregate_loop)


def _first_occurrence(values, n_slots, fill):
    """Index of the first occurrence of each slot value, fill where absent."""
    idx = np.full(n_slots, fill, np.int64)
    np.minimum.at(idx, values, np.arange(values.shape[0], dtype=np.int64))
    return idx


def _aggregate_numpy(words, durs, n_words):
    m = words.shape[0]
    if m == 0:
        return _aggregate_loop(words, durs, n_words)

    dwell = np.bincount(words, weights=durs, minlength=n_words)
    fix_count = np.bincount(words, minlength=n_words).astype(np.int64)

    arange_m = np.arange(m, dtype=np.int64)
    first_idx = _first_occurrence(words, n_words, m)
    last_idx = np.full(n_words, -1, np.int64)
    np.maximum.at(last_idx, words, arange_m)
    fixated = fix_count > 0
    first_fix_dur = np.where(fixated, durs[np.minimum(first_idx, m - 1)], 0.0)
    last_fix_dur = np.where(fixated, durs[last_idx], 0.0)

    # run segmentation
    starts = np.ones(m, np.bool_)
    starts[1:] = words[1:] != words[:-1]
    run_id = np.cumsum(starts) - 1
    n_runs = run_id[-1] + 1
    run_word = words[starts]
    run_dwell = np.bincount(run_id, weights=durs, minlength=n_runs)
    run_len = np.bincount(run_id, minlength=n_runs).astype(np.int64)
    run_count = np.bincount(run_word, minlength=n_words).astype(np.int64)
    first_run = _first_occurrence(run_word, n_words, n_runs)
    last_run = np.full(n_words, -1, np.int64)
    np.maximum.at(last_run, run_word, np.arange(n_runs, dtype=np.int64))
    has_run = run_count > 0
    first_run_dwell = np.where(has_run, run_dwell[np.minimum(first_run, n_runs - 1)], 0.0)
    first_run_count = np.where(has_run, run_len[np.minimum(first_run, n_runs - 1)], 0)
    last_run_dwell = np.where(has_run, run_dwell[last_run], 0.0)
    last_run_count = np.where(has_run, run_len[last_run], 0)

    # first pass: fixation i is first-pass iff no earlier fixation was higher
    cummax = np.maximum.accumulate(words)
    first_pass_mask = cummax == words
    first_pass_count = np.bincount(words[first_pass_mask], minlength=n_words).astype(np.int64)
    progressive = np.zeros(n_words, np.bool_)
    progressive[fixated] = first_pass_mask[first_idx[fixated]]

    # transitions
    prev, nxt = words[:-1], words[1:]
    moved = prev != nxt
    reg_in = np.bincount(nxt[moved & (prev > nxt)], minlength=n_words).astype(np.int64)
    reg_out_full = np.bincount(prev[moved & (nxt < prev)], minlength=n_words).astype(np.int64)
    fp_exit = moved & (nxt < prev) & (cummax[:-1] <= prev)
    reg_out = np.bincount(prev[fp_exit], minlength=n_words).astype(np.int64)

    # go-past windows
    gopast = np.zeros(n_words, np.float64)
    gopast_sel = np.zeros(n_words, np.float64)
    cum_dur = np.concatenate(([0.0], np.cumsum(durs)))
    for w in np.nonzero(fixated)[0]:
        s = first_idx[w]
        beyond = np.nonzero(words[s:] > w)[0]
        e = s + beyond[0] if beyond.size else m
        gopast[w] = cum_dur[e] - cum_dur[s]
        seg = slice(s, e)
        gopast_sel[w] = durs[seg][words[seg] == w].sum()

    # k-th word to receive its first fixation saw k distinct words before it
    visited_before = np.zeros(n_words, np.int64)
    order = np.argsort(first_idx[fixated], kind="stable")
    visited_before[np.nonzero(fixated)[0][order]] = np.arange(order.shape[0])

    return (
        dwell, fix_count, run_count, first_fix_dur, last_fix_dur,
        first_run_dwell, first_run_count, last_run_dwell, last_run_count,
        first_pass_count, progressive, reg_in, reg_out, reg_out_full,
        gopast, gopast_sel, visited_before,
    )


def aggregate_fixations(words: np.ndarray, durs: np.ndarray, n_words: int):
    """Aggregate an on-text fixation sequence into per-word measure arrays.

    ``words`` must contain valid word indices only (no off-text sentinel);
    see the tuple layout documented above for the return value.
    """
    words = np.ascontiguousarray(words, dtype=np.int64)
    durs = np.ascontiguousarray(durs, dtype=np.float64)
    if words.shape != durs.shape:
        raise ValueError("words and durations must have matching shapes")
    if words.size and (words.min() < 0 or words.max() >= n_words):
        raise ValueError("word index out of range; drop off-text fixations first")
    if _HAVE_NUMBA:
        return _aggregate_loop_jit(words, durs, n_words)
    return _aggregate_numpy(words, durs, n_words)


def saccade_counts(words: np.ndarray, n_words: int):
    """Per-word incoming/outgoing forward/backward saccade counts.

    Counts transitions between consecutive on-text fixations; within-word
    refixations are neither forward nor backward.
    Returns (in_fwd, in_bwd, out_fwd, out_bwd) int64 arrays.
    """
    words = np.ascontiguousarray(words, dtype=np.int64)
    prev, nxt = words[:-1], words[1:]
    fwd = nxt > prev
    bwd = nxt < prev
    in_fwd = np.bincount(nxt[fwd], minlength=n_words).astype(np.int64)
    in_bwd = np.bincount(nxt[bwd], minlength=n_words).astype(np.int64)
    out_fwd = np.bincount(prev[fwd], minlength=n_words).astype(np.int64)
    out_bwd = np.bincount(prev[bwd], minlength=n_words).astype(np.int64)
    return in_fwd, in_bwd, out_fwd, out_bwd

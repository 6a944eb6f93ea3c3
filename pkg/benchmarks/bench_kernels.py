"""Benchmark the word-measure aggregation kernels: numba JIT vs pure numpy.

Simulates a corpus-scale workload (many trials of realistic fixation and
paragraph sizes) and times both backends plus the per-trial wrapper.

    python benchmarks/bench_kernels.py [--trials 2000] [--fixations 180]

The same comparison can be driven through the env flag: running any
pipeline with GAZEGOAL_NO_NUMBA=1 selects the numpy path everywhere.
"""

import argparse
import time

import numpy as np

from gazegoal.kernels import _aggregate_loop, _aggregate_numpy, backend

try:
    from gazegoal.kernels import _aggregate_loop_jit
except ImportError:
    _aggregate_loop_jit = None


def make_workload(n_trials, n_fix, n_words, seed=0):
    rng = np.random.default_rng(seed)
    trials = []
    for _ in range(n_trials):
        m = int(rng.integers(n_fix // 2, n_fix + 1))
        # a mostly-forward scanpath with regressions, like real reading
        pos = np.clip(np.cumsum(rng.choice([-2, -1, 1, 1, 1, 2], size=m)), 0,
                      n_words - 1).astype(np.int64)
        durs = rng.integers(60, 400, size=m).astype(np.float64)
        trials.append((pos, durs))
    return trials


def bench(fn, trials, n_words, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for words, durs in trials:
            fn(words, durs, n_words)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--fixations", type=int, default=180)
    ap.add_argument("--words", type=int, default=110)
    args = ap.parse_args()

    trials = make_workload(args.trials, args.fixations, args.words)
    total_fix = sum(len(w) for w, _ in trials)
    print(f"workload: {args.trials} trials, {total_fix} fixations, "
          f"{args.words} words/paragraph (active backend: {backend()})")

    t_numpy = bench(_aggregate_numpy, trials, args.words)
    print(f"numpy fallback : {t_numpy:8.3f}s "
          f"({total_fix / t_numpy / 1e6:6.2f} Mfix/s)")

    if _aggregate_loop_jit is not None:
        _aggregate_loop_jit(*trials[0], args.words)  # compile outside timing
        t_numba = bench(_aggregate_loop_jit, trials, args.words)
        print(f"numba @njit    : {t_numba:8.3f}s "
              f"({total_fix / t_numba / 1e6:6.2f} Mfix/s)  "
              f"speedup x{t_numpy / t_numba:.1f}")
    else:
        print("numba @njit    : unavailable (install numba or unset "
              "GAZEGOAL_NO_NUMBA)")

    t_loop = bench(_aggregate_loop, trials[: max(args.trials // 10, 1)], args.words)
    print(f"python loop    : {t_loop * 10:8.3f}s (extrapolated, reference only)")


if __name__ == "__main__":
    main()

"""Two-way cluster bootstrap for non-i.i.d. trial data.

Trials cluster by participant and by paragraph; confidence intervals
resample both cluster sets with replacement. Values are aggregated into a
participant x paragraph cell grid once, so each bootstrap replicate is two
multinomial draws and a bilinear form.
"""

from __future__ import annotations

import numpy as np


def cluster_bootstrap_ci(
    participants: np.ndarray,
    paragraphs: np.ndarray,
    values: np.ndarray,
    n_boot: int = 1000,
    seed: int = 0,
    alpha: float = 0.05,
) -> tuple[float, float]:
    """Percentile CI for the mean of ``values`` under participant and
    paragraph resampling. Returns (low, high); NaNs when values is empty."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return float("nan"), float("nan")
    p_codes, p_idx = np.unique(participants, return_inverse=True)
    a_codes, a_idx = np.unique(paragraphs, return_inverse=True)
    n_p, n_a = len(p_codes), len(a_codes)

    totals = np.zeros((n_p, n_a))
    counts = np.zeros((n_p, n_a))
    np.add.at(totals, (p_idx, a_idx), values)
    np.add.at(counts, (p_idx, a_idx), 1.0)

    rng = np.random.default_rng(seed)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        wp = rng.multinomial(n_p, np.full(n_p, 1.0 / n_p)).astype(np.float64)
        wa = rng.multinomial(n_a, np.full(n_a, 1.0 / n_a)).astype(np.float64)
        denom = wp @ counts @ wa
        stats[b] = (wp @ totals @ wa) / denom if denom > 0 else np.nan
    stats = stats[np.isfinite(stats)]
    if stats.size == 0:
        return float("nan"), float("nan")
    lo, hi = np.quantile(stats, [alpha / 2, 1 - alpha / 2])
    return float(lo), float(hi)

"""Rank-based and correlation statistics used in experiment reports."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.stats import chi2


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank positions."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    sorted_v = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> tuple[float, float]:
    """Kruskal-Wallis H statistic (tie-corrected) and its chi-square p-value.

    When every observation is identical there is no evidence of a difference
    and ``(0.0, 1.0)`` is returned.
    """
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2 or any(g.size == 0 for g in groups):
        raise ValueError("Kruskal-Wallis needs at least two non-empty groups")
    pooled = np.concatenate(groups)
    N = pooled.size
    ranks = average_ranks(pooled)
    bounds = np.cumsum([0] + [g.size for g in groups])
    H = 12.0 / (N * (N + 1)) * sum(
        ranks[a:b].sum() ** 2 / (b - a) for a, b in zip(bounds[:-1], bounds[1:])
    ) - 3.0 * (N + 1)
    _, tie_sizes = np.unique(pooled, return_counts=True)
    correction = 1.0 - (tie_sizes ** 3 - tie_sizes).sum() / (N ** 3 - N)
    if correction <= 0:
        return 0.0, 1.0
    H = max(H / correction, 0.0)
    return float(H), float(chi2.sf(H, len(groups) - 1))


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("pearson needs two equal-length sequences of at least 2 values")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = (dx * dx).sum(), (dy * dy).sum()
    if sxx == 0 or syy == 0:
        raise ValueError("pearson is undefined for a constant sequence")
    r = (dx * dy).sum() / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))

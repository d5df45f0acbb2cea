"""Non-dominated filtering and sorting (all objectives minimised)."""
from __future__ import annotations

import numpy as np


def _as_values(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim != 2 or len(v) == 0:
        raise ValueError("expected a non-empty (n, k) array of objective values")
    return v


def nondominated_mask(values) -> np.ndarray:
    """True for points no other point dominates; of identical points only the first survives."""
    v = _as_values(values)
    n, k = v.shape
    if k == 2:
        order = np.lexsort((np.arange(n), v[:, 1], v[:, 0]))
        mask = np.zeros(n, dtype=bool)
        best = np.inf
        for i in order:
            if v[i, 1] < best:
                mask[i] = True
                best = v[i, 1]
        return mask
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        le = np.all(v <= v[i], axis=1)
        lt = np.any(v < v[i], axis=1)
        dominated = np.any(le & lt)
        duplicate = np.any(np.all(v[:i] == v[i], axis=1))
        mask[i] = not (dominated or duplicate)
    return mask


def nondominated_rank(values) -> np.ndarray:
    """Front index per point by repeated peeling (0 = Pareto front).

    Exact duplicates of a front member are pushed to later fronts.
    """
    v = _as_values(values)
    rank = np.full(len(v), -1)
    remaining = np.arange(len(v))
    r = 0
    while remaining.size:
        mask = nondominated_mask(v[remaining])
        rank[remaining[mask]] = r
        remaining = remaining[~mask]
        r += 1
    return rank


def crowding_distance(values) -> np.ndarray:
    """NSGA-II crowding distance within one set of points; extremes get +inf."""
    v = _as_values(values)
    n, k = v.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for j in range(k):
        order = np.argsort(v[:, j], kind="stable")
        span = v[order[-1], j] - v[order[0], j]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span > 0:
            dist[order[1:-1]] += (v[order[2:], j] - v[order[:-2], j]) / span
    return dist

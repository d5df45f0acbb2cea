"""Image-similarity metrics and resampling statistics for evaluation tables.

EMD convention: both images are turned into unit-mass signatures (pixel
intensity above a threshold, normalised to sum to one) and the ground
distance is Euclidean in pixel units. An EMD of 1.0 therefore means "the
whole cable moved by one pixel on average".
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .imaging import EmptyForegroundError


@dataclass(frozen=True)
class MassSignature:
    support: np.ndarray  # (k, 2) pixel coordinates as (x, y) = (col, row)
    weights: np.ndarray  # (k,) positive, summing to 1

    def __post_init__(self):
        if len(self.support) == 0:
            raise EmptyForegroundError("signature has no support")
        if len(self.support) != len(self.weights) or np.any(self.weights <= 0):
            raise ValueError("signature weights must be positive and match the support")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-9:
            raise ValueError("signature weights must sum to 1")

    def shifted(self, offset) -> "MassSignature":
        return MassSignature(self.support + np.asarray(offset, dtype=float), self.weights)


def make_signature(points, masses) -> MassSignature:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    w = np.asarray(masses, dtype=float).reshape(-1)
    return MassSignature(pts, w / w.sum())


def signature(img: np.ndarray, threshold: float = 0.5) -> MassSignature:
    """Pixels strictly above ``threshold``, weighted by intensity."""
    a = np.asarray(img, dtype=float)
    rows, cols = np.nonzero(a > threshold)
    if len(rows) == 0:
        raise EmptyForegroundError(f"no pixel above {threshold}")
    w = a[rows, cols]
    return MassSignature(np.stack([cols, rows], axis=1).astype(float), w / w.sum())


@dataclass(frozen=True)
class TransportResult:
    cost: float
    flow: np.ndarray  # (n, m) mass moved from a.support[i] to b.support[j]


def _ground_cost(a: MassSignature, b: MassSignature) -> np.ndarray:
    d = a.support[:, None, :] - b.support[None, :, :]
    return np.sqrt(np.sum(d * d, axis=-1))


def _cancel_shared_mass(a: MassSignature, b: MassSignature):
    """Mass sitting on the same pixel in both signatures stays put at zero cost.

    With a metric ground cost this is always part of some optimal plan, so it
    is removed before the flow search. Returns the leftover supplies/demands
    and the ``(i, j, mass)`` of the cancelled pairs.
    """
    index = {tuple(p): j for j, p in enumerate(b.support)}
    sa, sb = a.weights.astype(float).copy(), b.weights.astype(float).copy()
    pairs = []
    for i, p in enumerate(a.support):
        j = index.get(tuple(p))
        if j is not None:
            moved = min(sa[i], sb[j])
            sa[i] -= moved
            sb[j] -= moved
            pairs.append((i, j, moved))
    return sa, sb, pairs


def _initial_basis(cost: np.ndarray, supply: np.ndarray, demand: np.ndarray):
    """Matrix-minimum rule: a feasible spanning-tree basis of ``n + m - 1`` cells."""
    n, m = cost.shape
    s, d = supply.copy(), demand.copy()
    alive_r = np.ones(n, dtype=bool)
    alive_c = np.ones(m, dtype=bool)
    masked = cost.copy()
    basis = {}
    for step in range(n + m - 1):
        flat = int(np.argmin(masked))
        i, j = divmod(flat, m)
        x = min(s[i], d[j])
        basis[(i, j)] = x
        s[i] -= x
        d[j] -= x
        if step == n + m - 2:
            break
        kill_row = s[i] <= d[j]
        if kill_row and alive_r.sum() == 1:
            kill_row = False
        elif not kill_row and alive_c.sum() == 1:
            kill_row = True
        if kill_row:
            alive_r[i] = False
            masked[i, :] = np.inf
        else:
            alive_c[j] = False
            masked[:, j] = np.inf
    return basis


def _tree_path(adj, start: int, goal: int) -> list[int]:
    parent = {start: -1}
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for w in adj[u]:
                if w not in parent:
                    parent[w] = u
                    if w == goal:
                        path = [w]
                        while parent[path[-1]] != -1:
                            path.append(parent[path[-1]])
                        return path[::-1]
                    nxt.append(w)
        frontier = nxt
    raise RuntimeError("transport: basis is not a spanning tree")


def _component(adj, start: int) -> list[int]:
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return list(seen)


def _network_simplex(cost: np.ndarray, supply: np.ndarray, demand: np.ndarray, max_degenerate: int = 50):
    """Optimal flow of the balanced transportation problem by the primal simplex on its spanning tree.

    Nodes ``0..n-1`` are supply rows and ``n..n+m-1`` demand columns. The entering
    cell is the most negative reduced cost; after ``max_degenerate`` pivots in a row
    that move no mass, Bland's smallest-index rule is used to rule out cycling.
    """
    n, m = cost.shape
    basis = _initial_basis(cost, supply, demand)
    adj = [set() for _ in range(n + m)]
    for i, j in basis:
        adj[i].add(n + j)
        adj[n + j].add(i)
    u, v = np.zeros(n), np.zeros(m)
    done = {0}
    stack = [0]
    while stack:
        a = stack.pop()
        for b in adj[a]:
            if b in done:
                continue
            if a < n:
                v[b - n] = cost[a, b - n] - u[a]
            else:
                u[b] = cost[b, a - n] - v[a - n]
            done.add(b)
            stack.append(b)
    scale = max(float(np.abs(cost).max()), 1.0)
    degenerate = 0
    for _ in range(50 * (n + m) * max(n, m) + 1000):
        red = cost - u[:, None] - v[None, :]
        if degenerate < max_degenerate:
            flat = int(np.argmin(red))
        else:
            neg = np.flatnonzero(red < -1e-12 * scale)
            flat = int(neg[0]) if neg.size else 0
        ei, ej = divmod(flat, m)
        r = red[ei, ej]
        if r >= -1e-12 * scale:
            break
        path = _tree_path(adj, ei, n + ej)  # row ei ... column ej, alternating
        cells = []
        for a, b in zip(path[:-1], path[1:]):
            cells.append((a, b - n) if a < n else (b, a - n))
        # Cells along the path alternate -, +, -, ... starting next to the entering row.
        minus = cells[0::2]
        theta = min(basis[c] for c in minus)
        ties = [c for c in minus if basis[c] <= theta]
        leave = min(ties) if degenerate >= max_degenerate else ties[0]
        for k, c in enumerate(cells):
            basis[c] += -theta if k % 2 == 0 else theta
        basis[(ei, ej)] = theta
        del basis[leave]
        li, lj = leave
        adj[li].discard(n + lj)
        adj[n + lj].discard(li)
        # Removing the leaving cell splits the tree; shift the duals on the entering column's side.
        side = _component(adj, n + ej)
        for node in side:
            if node < n:
                u[node] -= r
            else:
                v[node - n] += r
        adj[ei].add(n + ej)
        adj[n + ej].add(ei)
        degenerate = degenerate + 1 if theta <= 0 else 0
    else:
        raise RuntimeError("transport: simplex iteration limit reached")
    flow = np.zeros((n, m))
    for (i, j), x in basis.items():
        flow[i, j] = max(x, 0.0)
    return flow


def transport(a: MassSignature, b: MassSignature, tol: float = 1e-13) -> TransportResult:
    """Exact optimal transport between two signatures (network simplex).

    Mass shared by coincident pixels is matched in place first, then only the
    pixels with leftover mass enter the transportation problem.
    """
    cost = _ground_cost(a, b)
    n, m = cost.shape
    supply, demand, shared = _cancel_shared_mass(a, b)
    flow = np.zeros((n, m))
    rows = np.flatnonzero(supply > tol)
    cols = np.flatnonzero(demand > tol)
    if rows.size and cols.size:
        s, d = supply[rows], demand[cols]
        d = d * (s.sum() / d.sum())
        flow[np.ix_(rows, cols)] = _network_simplex(cost[np.ix_(rows, cols)], s, d)
    for i, j, moved in shared:
        flow[i, j] += moved
    return TransportResult(float(np.sum(flow * cost) / flow.sum()), flow)


def sinkhorn(a: MassSignature, b: MassSignature, reg: float = 0.5, n_iter: int = 2000) -> float:
    """Entropy-regularised approximation; an upper bound that tightens as ``reg`` shrinks."""
    cost = _ground_cost(a, b)
    k = np.exp(-cost / reg)
    u = np.ones(len(a.weights))
    for _ in range(n_iter):
        v = b.weights / (k.T @ u)
        u = a.weights / (k @ v)
    plan = u[:, None] * k * v[None, :]
    return float(np.sum(plan * cost))


def emd(a: MassSignature, b: MassSignature, method: str = "exact") -> float:
    if method == "exact":
        return transport(a, b).cost
    if method == "sinkhorn":
        return sinkhorn(a, b)
    raise ValueError(f"unknown EMD method {method!r}")


def image_emd(img_a: np.ndarray, img_b: np.ndarray, threshold: float = 0.5) -> float:
    return emd(signature(img_a, threshold), signature(img_b, threshold))


def success_rates(costs: Sequence[float], thresholds: Sequence[float]) -> list[float]:
    """Fraction of costs strictly below each threshold."""
    c = np.asarray(costs, dtype=float)
    if c.size == 0:
        raise ValueError("no costs")
    return [float(np.mean(c < t)) for t in thresholds]


def success_rate_at(tau: float) -> Callable[[np.ndarray], float]:
    def stat(x):
        return float(np.mean(np.asarray(x) < tau))

    stat.__name__ = f"success_rate@{tau:g}"
    return stat


def _statistic(statistic) -> Callable:
    if statistic == "mean":
        return lambda x: float(np.mean(x))
    if callable(statistic):
        return statistic
    raise ValueError(f"unknown statistic {statistic!r}")


def bootstrap(costs, statistic="mean", n_resamples: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Mean and standard deviation of a statistic over resamples with replacement."""
    c = np.asarray(costs, dtype=float)
    if c.size == 0 or n_resamples < 1:
        raise ValueError("bootstrap needs data and at least one resample")
    stat = _statistic(statistic)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, c.size, size=(n_resamples, c.size))
    values = np.array([stat(c[row]) for row in idx])
    return float(values.mean()), float(values.std())


def bootstrap_difference(a, b, n_resamples: int = 1000, seed: int = 0, level: float = 0.9):
    """Paired bootstrap of ``mean(a) - mean(b)``; returns (estimate, lower, upper)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("paired samples must be non-empty and equally long")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, a.size, size=(n_resamples, a.size))
    diffs = (a[idx] - b[idx]).mean(axis=1)
    alpha = (1.0 - level) / 2
    lo, hi = np.quantile(diffs, [alpha, 1.0 - alpha])
    return float(np.mean(a - b)), float(lo), float(hi)

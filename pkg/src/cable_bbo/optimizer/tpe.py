"""Tree-structured Parzen estimator for box- and integer-constrained search.

Observations are split into a "good" set (the best ``gamma(n)`` trials) and
the rest. Each set gets a Parzen mixture of product Gaussian kernels, one
kernel per observation plus a broad prior kernel at the domain centre.
Candidates are drawn from the good mixture ``l`` and the one maximising
``l(x) / g(x)`` is evaluated next.

Constraints are enforced at sampling time: kernels are truncated to the box
and integer dimensions are drawn from their discretised kernel mass, so no
proposal ever leaves the search space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp, ndtr, ndtri

from .pareto import crowding_distance, nondominated_rank

_LOG_FLOOR = -700.0


@dataclass(frozen=True)
class Dimension:
    name: str
    low: float
    high: float
    integer: bool = False

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"empty range for {self.name}")
        if self.integer and (self.low != int(self.low) or self.high != int(self.high)):
            raise ValueError(f"integer dimension {self.name} needs integer bounds")

    @property
    def kde_bounds(self) -> tuple[float, float]:
        """Support of the kernels; integer cells extend half a step past each bound."""
        if self.integer:
            return self.low - 0.5, self.high + 0.5
        return self.low, self.high


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dimension, ...]

    def __len__(self):
        return len(self.dims)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        for d, v in zip(self.dims, x):
            if not d.low <= v <= d.high:
                return False
            if d.integer and v != round(v):
                return False
        return x.shape == (len(self.dims),)

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        cols = []
        for d in self.dims:
            if d.integer:
                cols.append(rng.integers(int(d.low), int(d.high) + 1, size=n).astype(float))
            else:
                cols.append(rng.uniform(d.low, d.high, size=n))
        return np.stack(cols, axis=1)


def cable_space(mu_range=(-80, 80), sigma_range: tuple[float, float] | None = (0.0, 0.5)) -> SearchSpace:
    """Integer joint means in degrees, optionally followed by the noise scale."""
    dims = [Dimension(f"mu{i + 1}", mu_range[0], mu_range[1], integer=True) for i in range(3)]
    if sigma_range is not None:
        dims.append(Dimension("sigma", sigma_range[0], sigma_range[1]))
    return SearchSpace(tuple(dims))


@dataclass
class Trial:
    number: int
    params: np.ndarray
    values: tuple[float, ...]

    @property
    def value(self) -> float:
        return self.values[0]


def default_gamma(n: int) -> int:
    return min(math.ceil(0.25 * n), 25)


class ParzenEstimator:
    """Mixture of truncated product-Gaussian kernels over a search space."""

    def __init__(self, observations: np.ndarray, space: SearchSpace, min_bandwidth: float = 0.01,
                 prior_weight: float = 1.0):
        self.space = space
        obs = np.asarray(observations, dtype=float).reshape(-1, len(space))
        lows = np.array([d.kde_bounds[0] for d in space.dims])
        highs = np.array([d.kde_bounds[1] for d in space.dims])
        width = highs - lows
        k = len(obs)
        mus = np.vstack([obs, (lows + highs) / 2])
        sigmas = np.empty_like(mus)
        sigmas[-1] = width
        for j in range(len(space)):
            if k == 0:
                break
            order = np.argsort(obs[:, j], kind="stable")
            s = obs[order, j]
            padded = np.concatenate([[lows[j]], s, [highs[j]]])
            gaps = np.maximum(padded[1:-1] - padded[:-2], padded[2:] - padded[1:-1])
            # The floor shrinks as observations accumulate and never drops below min_bandwidth.
            floor = max(min_bandwidth, 1.0 / min(100, k + 1)) * width[j]
            sigmas[order, j] = np.clip(gaps, floor, width[j])
        weights = np.concatenate([np.ones(k), [prior_weight]])
        self.mus, self.sigmas = mus, sigmas
        self.log_weights = np.log(weights / weights.sum())
        self.lows, self.highs = lows, highs
        self._ints = np.array([d.integer for d in space.dims])
        self._cdf_lo = ndtr((lows - mus) / sigmas)
        self._cdf_hi = ndtr((highs - mus) / sigmas)
        self._log_z = np.log(np.maximum(self._cdf_hi - self._cdf_lo, 1e-300))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        comp = rng.choice(len(self.mus), size=n, p=np.exp(self.log_weights))
        u = rng.uniform(size=(n, len(self.space)))
        lo, hi = self._cdf_lo[comp], self._cdf_hi[comp]
        p = np.clip(lo + u * (hi - lo), 1e-300, 1 - 1e-16)
        x = self.mus[comp] + self.sigmas[comp] * ndtri(p)
        x = np.clip(x, self.lows, self.highs)
        lows = np.array([d.low for d in self.space.dims])
        highs = np.array([d.high for d in self.space.dims])
        x = np.where(self._ints, np.round(x), x)
        return np.clip(x, lows, highs)

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        """Log density (continuous dims) times log mass (integer dims), per row of ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = (x[:, None, :] - self.mus[None]) / self.sigmas[None]
        cont = -0.5 * z * z - np.log(self.sigmas[None]) - 0.5 * np.log(2 * np.pi)
        zu = (x[:, None, :] + 0.5 - self.mus[None]) / self.sigmas[None]
        zl = (x[:, None, :] - 0.5 - self.mus[None]) / self.sigmas[None]
        mass = ndtr(zu) - ndtr(zl)
        # Far in the tail the cdf difference underflows; a unit cell's mass is then ~ the pdf.
        disc = np.where(mass > 1e-12, np.log(np.maximum(mass, 1e-300)), cont)
        per_dim = np.where(self._ints[None, None, :], disc, cont) - self._log_z[None]
        per_dim = np.maximum(per_dim, _LOG_FLOOR)
        return logsumexp(self.log_weights[None] + per_dim.sum(axis=2), axis=1)


@dataclass
class TPEConfig:
    n_startup: int = 10
    n_candidates: int = 24
    gamma: Callable[[int], int] = field(default=default_gamma)
    min_bandwidth: float = 0.01
    prior_weight: float = 1.0


def suggest(rng: np.random.Generator, space: SearchSpace, below: np.ndarray, above: np.ndarray,
            cfg: TPEConfig) -> np.ndarray:
    l = ParzenEstimator(below, space, cfg.min_bandwidth, cfg.prior_weight)
    g = ParzenEstimator(above, space, cfg.min_bandwidth, cfg.prior_weight)
    cand = l.sample(rng, cfg.n_candidates)
    score = l.log_pdf(cand) - g.log_pdf(cand)
    return cand[int(np.argmax(score))]


def _order_single(values: np.ndarray) -> np.ndarray:
    return np.argsort(values[:, 0], kind="stable")


def _order_multi(values: np.ndarray) -> np.ndarray:
    """Rank-major, then descending crowding distance within each rank, then trial order."""
    rank = nondominated_rank(values)
    crowd = np.zeros(len(values))
    for r in np.unique(rank):
        members = np.flatnonzero(rank == r)
        crowd[members] = crowding_distance(values[members])
    return np.lexsort((np.arange(len(values)), -crowd, rank))


def _run(objective, space: SearchSpace, n_trials: int, seed: int, cfg: TPEConfig, order_fn) -> list[Trial]:
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    trials: list[Trial] = []
    xs: list[np.ndarray] = []
    ys: list[tuple[float, ...]] = []
    for t in range(n_trials):
        if t < cfg.n_startup:
            x = space.sample_uniform(rng, 1)[0]
        else:
            X, Y = np.array(xs), np.array(ys)
            order = order_fn(Y)
            n_below = max(1, min(cfg.gamma(len(X)), len(X) - 1))
            x = suggest(rng, space, X[order[:n_below]], X[order[n_below:]], cfg)
        values = objective(x)
        values = tuple(float(v) for v in np.atleast_1d(values))
        if not all(np.isfinite(values)):
            raise ValueError(f"objective returned non-finite values {values} at {x}")
        xs.append(x)
        ys.append(values)
        trials.append(Trial(t, x, values))
    return trials


def tpe_minimize(objective: Callable[[np.ndarray], float], space: SearchSpace, n_trials: int,
                 seed: int = 0, cfg: TPEConfig | None = None) -> tuple[Trial, list[Trial]]:
    """Single-objective TPE; returns the best trial (earliest on ties) and the full history."""
    history = _run(objective, space, n_trials, seed, cfg or TPEConfig(), _order_single)
    best = min(history, key=lambda tr: (tr.value, tr.number))
    return best, history


def motpe_minimize(objective: Callable[[np.ndarray], Sequence[float]], space: SearchSpace,
                   n_trials: int = 1000, seed: int = 0, cfg: TPEConfig | None = None) -> list[Trial]:
    """Multi-objective TPE: good/bad split by non-domination rank, then crowding."""
    return _run(objective, space, n_trials, seed, cfg or TPEConfig(), _order_multi)


def random_search(objective: Callable[[np.ndarray], float], space: SearchSpace, n_trials: int,
                  seed: int = 0) -> tuple[Trial, list[Trial]]:
    """Uniform sampling baseline with the same interface as :func:`tpe_minimize`."""
    cfg = TPEConfig(n_startup=n_trials)
    return tpe_minimize(objective, space, n_trials, seed, cfg)

"""Joint-command search on an :class:`InferenceProblem` with each method."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .objectives import GradientConfig, InferenceProblem, gradient_minimize
from .pareto import nondominated_mask
from .tpe import SearchSpace, TPEConfig, Trial, cable_space, motpe_minimize, tpe_minimize


@dataclass(frozen=True)
class ParetoPoint:
    mu: np.ndarray  # degrees
    sigma: float
    g1: float
    trial: int = -1


def pareto_front(trials: list[Trial]) -> list[ParetoPoint]:
    """Non-dominated trials under (minimise g1, maximise sigma), sorted by sigma.

    Trials carry ``params = (mu1, mu2, mu3, sigma)`` and ``values[0] = g1``;
    among identical (g1, sigma) pairs the earliest trial is kept.
    """
    if not trials:
        raise ValueError("pareto_front of no trials")
    vals = np.array([[t.values[0], -t.params[3]] for t in trials])
    keep = np.flatnonzero(nondominated_mask(vals))
    pts = [ParetoPoint(trials[i].params[:3].copy(), float(trials[i].params[3]), float(trials[i].values[0]),
                       trials[i].number) for i in keep]
    return sorted(pts, key=lambda p: (p.sigma, p.trial))


def select_execution(front: list[ParetoPoint], window=(0.03, 0.05)) -> ParetoPoint:
    """Lowest-g1 front point with sigma inside ``window``; else the point nearest the window."""
    if not front:
        raise ValueError("empty Pareto front")
    lo, hi = window
    inside = [p for p in front if lo <= p.sigma <= hi]
    if inside:
        return min(inside, key=lambda p: (p.g1, p.trial))
    return min(front, key=lambda p: (max(lo - p.sigma, p.sigma - hi), p.g1, p.trial))


@dataclass
class SearchResult:
    method: str
    joints_deg: np.ndarray
    history: list[Trial]
    sigma: float = 0.0
    front: list[ParetoPoint] | None = None


def run_gradient(problem: InferenceProblem, seed: int, kind: str = "mse",
                 cfg: GradientConfig = GradientConfig(), init_range=(-80.0, 80.0)) -> SearchResult:
    """One gradient descent from a uniformly random start; history holds the per-step path."""
    rng = np.random.default_rng(seed)
    init = rng.uniform(init_range[0], init_range[1], size=3)
    final, costs = gradient_minimize(problem, init, kind, cfg, trace=True)
    g1 = float(problem.recon(problem.normalize(final))[0])
    history = [Trial(cfg.steps, np.append(final, 0.0), (g1,))]
    method = "gradient" if kind == "mse" else "gradient_dist"
    return SearchResult(method, final, history)


def run_tpe(problem: InferenceProblem, n_trials: int, seed: int, space: SearchSpace | None = None,
            cfg: TPEConfig | None = None) -> SearchResult:
    """Deterministic TPE over integer joint means: the stochastic objective with sigma fixed at 0."""
    space = space or cable_space(sigma_range=None)
    best, history = tpe_minimize(lambda x: problem.g1(x, 0.0), space, n_trials, seed, cfg)
    history = [Trial(t.number, np.append(t.params, 0.0), t.values) for t in history]
    return SearchResult("tpe", best.params.copy(), history)


def run_motpe(problem: InferenceProblem, n_trials: int, seed: int, space: SearchSpace | None = None,
              cfg: TPEConfig | None = None, window=(0.03, 0.05)) -> SearchResult:
    """Two-objective TPE over (mu, sigma), then pick the executed mean from the Pareto front."""
    space = space or cable_space()

    def objective(x):
        return problem.g1(x[:3], float(x[3])), -float(x[3])

    trials = motpe_minimize(objective, space, n_trials, seed, cfg)
    front = pareto_front(trials)
    chosen = select_execution(front, window)
    return SearchResult("motpe", chosen.mu.copy(), trials, chosen.sigma, front)

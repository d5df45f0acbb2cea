"""Costs on the forward model's predicted image for a fixed (I_t, J_t, I_target).

Joints reach this module in degrees and are normalised with the arm's joint
limits before they enter the network. The Monte Carlo noise of the stochastic
objective is added in normalised units.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import denormalize_joints, normalize_joints
from ..imaging import distance_transform
from ..model import ConditionedModel, ForwardModel

DEFAULT_LIMITS = ((-90.0, 90.0),) * 3


def reconstruction_loss(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Half the pixel-sum squared error, per image of a ``(N, h, w)`` batch."""
    diff = target[None] - pred
    return 0.5 * np.sum(diff * diff, axis=(1, 2))


class InferenceProblem:
    """Everything the optimizers need to score candidate ``J_t+1`` values."""

    def __init__(self, model: ForwardModel, image_t, joints_t_deg, target, limits=DEFAULT_LIMITS,
                 m: int = 200, noise_seed: int = 0):
        if m < 1:
            raise ValueError("Monte Carlo sample count must be >= 1")
        a = model.arch
        self.target = np.asarray(target, dtype=float)
        if self.target.shape != (a.height, a.width):
            raise ValueError(f"target shape {self.target.shape} != model dims {(a.height, a.width)}")
        self.limits = limits
        self.cm: ConditionedModel = model.condition(image_t, normalize_joints(joints_t_deg, limits))
        self._dist = None
        self.m = m
        self.noise = np.random.default_rng(noise_seed).standard_normal((m, 3))

    @property
    def distance_image(self) -> np.ndarray:
        if self._dist is None:
            self._dist = distance_transform(self.target)
        return self._dist

    def normalize(self, q_deg) -> np.ndarray:
        return normalize_joints(q_deg, self.limits)

    def denormalize(self, q) -> np.ndarray:
        return denormalize_joints(q, self.limits)

    # -- deterministic costs on normalised joints ----------------------------
    def predict(self, q) -> np.ndarray:
        return self.cm.predict(q)

    def recon(self, q) -> np.ndarray:
        """Deterministic reconstruction loss (the stochastic loss at zero noise)."""
        q = np.atleast_2d(q)
        return reconstruction_loss(self.cm.predict(q), self.target)

    def mse(self, q) -> np.ndarray:
        q = np.atleast_2d(q)
        diff = self.target[None] - self.cm.predict(q)
        return np.mean(diff * diff, axis=(1, 2))

    def _mse_terms(self, pred):
        diff = pred - self.target[None]
        npix = diff[0].size
        return np.mean(diff * diff, axis=(1, 2)), 2.0 * diff / npix

    def _dist_terms(self, pred):
        d = self.distance_image
        return np.mean(pred * d[None], axis=(1, 2)), np.broadcast_to(d / d.size, pred.shape)

    def mse_and_grad(self, q):
        return self.cm.input_gradient(q, self._mse_terms)

    def distance_cost_and_grad(self, q):
        return self.cm.input_gradient(q, self._dist_terms)

    def cost_and_grad(self, q, kind: str):
        if kind == "mse":
            return self.mse_and_grad(q)
        if kind == "distance_image":
            return self.distance_cost_and_grad(q)
        raise ValueError(f"unknown gradient objective {kind!r}")

    # -- stochastic objective ---------------------------------------------
    def g1(self, mu_deg, sigma: float, noise: np.ndarray | None = None) -> float:
        """Monte Carlo estimate of the expected halved reconstruction loss.

        Samples ``mu + sigma**2 * eps`` in normalised joint units, clamped to [0, 1].
        At ``sigma == 0`` this is exactly the deterministic loss at ``mu``.
        """
        mu = self.normalize(mu_deg)
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        if sigma == 0:
            return float(self.recon(mu)[0])
        eps = self.noise if noise is None else noise
        q = np.clip(mu[None] + sigma**2 * eps, 0.0, 1.0)
        return float(np.mean(self.recon(q)))


def eval_mse(model, image_t, joints_t_deg, joints_t1_deg, target, limits=DEFAULT_LIMITS) -> float:
    """Pixel-mean squared error between the target and the prediction."""
    prob = InferenceProblem(model, image_t, joints_t_deg, target, limits, m=1)
    return float(prob.mse(prob.normalize(joints_t1_deg))[0])


def eval_distance_cost(model, image_t, joints_t_deg, joints_t1_deg, target, limits=DEFAULT_LIMITS) -> float:
    """Pixel mean of predicted intensity weighted by distance to the target cable."""
    prob = InferenceProblem(model, image_t, joints_t_deg, target, limits, m=1)
    cost, _ = prob.distance_cost_and_grad(prob.normalize(joints_t1_deg))
    return float(cost)


def eval_g1(model, image_t, joints_t_deg, mu_deg, sigma, target, m: int = 200, seed: int = 0,
            limits=DEFAULT_LIMITS) -> float:
    prob = InferenceProblem(model, image_t, joints_t_deg, target, limits, m=m, noise_seed=seed)
    return prob.g1(mu_deg, sigma)


@dataclass(frozen=True)
class GradientConfig:
    steps: int = 2000
    learning_rate: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def gradient_minimize(problem: InferenceProblem, init_deg, kind: str = "mse",
                      cfg: GradientConfig = GradientConfig(), trace: bool = False):
    """Adam on normalised ``J_t+1``, projected back into the joint box after every step.

    ``init_deg`` may be one joint vector or a ``(N, 3)`` batch of independent
    starts. Returns the final joints in degrees (and the per-step cost trace).
    """
    init = np.asarray(init_deg, dtype=float)
    single = init.ndim == 1
    q = np.atleast_2d(problem.normalize(init)).copy()
    m1 = np.zeros_like(q)
    m2 = np.zeros_like(q)
    costs = []
    for step in range(1, cfg.steps + 1):
        cost, grad = problem.cost_and_grad(q, kind)
        costs.append(cost)
        m1 = cfg.beta1 * m1 + (1 - cfg.beta1) * grad
        m2 = cfg.beta2 * m2 + (1 - cfg.beta2) * grad * grad
        c1, c2 = 1 - cfg.beta1**step, 1 - cfg.beta2**step
        q = np.clip(q - cfg.learning_rate * (m1 / c1) / (np.sqrt(m2 / c2) + cfg.eps), 0.0, 1.0)
    out = problem.denormalize(q)
    out = out[0] if single else out
    if trace:
        return out, np.array(costs)
    return out

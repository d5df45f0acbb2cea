"""Grid-search approximate inverse kinematics and optimiser solution scatters."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial import ConvexHull, QhullError

from .optimizer import GradientConfig, InferenceProblem, TPEConfig, cable_space, gradient_minimize, tpe_minimize
from .sim import ArmConfig, forward_kinematics_batch


@dataclass(frozen=True)
class IKQuery:
    target_point_mm: tuple[float, float]
    delta_mm: float = 3.0
    grid_step_deg: float = 1.0

    def __post_init__(self):
        if self.delta_mm <= 0 or self.grid_step_deg <= 0:
            raise ValueError("delta and grid step must be positive")


def joint_grid(arm: ArmConfig, step: float) -> list[np.ndarray]:
    axes = []
    for lo, hi in arm.joint_limits_deg:
        n = (hi - lo) / step
        if abs(n - round(n)) > 1e-9:
            raise ValueError(f"grid step {step} does not divide joint range [{lo}, {hi}]")
        axes.append(lo + step * np.arange(int(round(n)) + 1))
    return axes


def ik_grid_search(q: IKQuery, arm: ArmConfig = ArmConfig()) -> np.ndarray:
    """All grid joint vectors whose end-effector lies in the +/-delta box around the target.

    Rows are sorted lexicographically; the result may be empty ``(0, 3)``.
    """
    a1, a2, a3 = joint_grid(arm, q.grid_step_deg)
    target = np.asarray(q.target_point_mm, dtype=float)
    rest = np.stack(np.meshgrid(a2, a3, indexing="ij"), axis=-1).reshape(-1, 2)
    hits = []
    for j1 in a1:
        joints = np.column_stack([np.full(len(rest), j1), rest])
        p = forward_kinematics_batch(arm, joints)
        ok = np.all(np.abs(p - target) <= q.delta_mm, axis=1)
        if ok.any():
            hits.append(joints[ok])
    if not hits:
        return np.zeros((0, 3))
    sols = np.vstack(hits)
    return sols[np.lexsort(sols.T[::-1])]


def solution_scatter(problem: InferenceProblem, method: str, n_restarts: int = 200, seed: int = 0,
                     tpe_trials: int = 300, gradient: GradientConfig = GradientConfig(),
                     tpe_cfg: TPEConfig | None = None, init_range=(-80.0, 80.0)) -> np.ndarray:
    """Optimised ``J*_t+1`` (degrees) from ``n_restarts`` independent random starts."""
    rng = np.random.default_rng(seed)
    if method in ("gradient", "gradient_dist"):
        inits = rng.uniform(init_range[0], init_range[1], size=(n_restarts, 3))
        kind = "mse" if method == "gradient" else "distance_image"
        return np.atleast_2d(gradient_minimize(problem, inits, kind, gradient))
    if method == "tpe":
        space = cable_space(sigma_range=None)
        seeds = rng.integers(2**31, size=n_restarts)
        return np.array([tpe_minimize(lambda x: problem.g1(x, 0.0), space, tpe_trials, int(s), tpe_cfg)[0].params
                         for s in seeds])
    raise ValueError(f"unknown scatter method {method!r}")


def hull_volume(points: np.ndarray) -> float:
    """Convex-hull volume of joint-space points; 0 for degenerate (flat) sets."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= pts.shape[1]:
        return 0.0
    try:
        return float(ConvexHull(pts).volume)
    except QhullError:
        return 0.0


def hull_area(points: np.ndarray) -> float:
    """Surface area of the joint-space convex hull.

    A flat set (say, one joint pinned at its bound) has zero volume but still
    spans a region; its area counts both faces. Joggling lets Qhull accept it.
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) < 3:
        return 0.0
    try:
        return float(ConvexHull(pts, qhull_options="QJ").area)
    except QhullError:
        return 0.0


def count_clusters(points: np.ndarray, distance_deg: float = 5.0) -> int:
    """Single-linkage clusters: points closer than ``distance_deg`` share a cluster."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return len(pts)
    labels = fcluster(linkage(pts, method="single"), t=distance_deg, criterion="distance")
    return int(labels.max())


def scatter_to_csv(scatters: dict[str, np.ndarray], ik_solutions: np.ndarray | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "index", "j1", "j2", "j3"])
    for name, pts in scatters.items():
        for i, p in enumerate(pts):
            w.writerow([name, i, *(repr(float(v)) for v in p)])
    if ik_solutions is not None:
        for i, p in enumerate(ik_solutions):
            w.writerow(["ik", i, *(repr(float(v)) for v in p)])
    return buf.getvalue()

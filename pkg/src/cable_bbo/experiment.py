"""Evaluation episodes: pick a target, optimise J_t+1, execute it, score with EMD.

Each episode performs six random motions from a straight resting cable. The
settled image after the third motion is the target; the state after the sixth
is the starting point (I_t, J_t). Every method then proposes J*_t+1, the
simulator executes it, and three EMDs are recorded (target/inferred,
target/executed, executed/inferred).
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from .dataset import normalize_joints, observe, sample_target
from .imaging import DEFAULT_DIMS
from .metrics import bootstrap, emd, signature, success_rate_at
from .model import ForwardModel
from .optimizer import GradientConfig, InferenceProblem, TPEConfig, cable_space, run_gradient, run_motpe, run_tpe
from .sim import CableState, SimConfig, execute_motion, rest_state

METHODS = ("gradient", "gradient_dist", "tpe", "motpe")
PAIRINGS = ("target_inferred", "target_robot", "robot_inferred")
_METHOD_STREAM = {name: i for i, name in enumerate(METHODS)}


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class SuiteConfig:
    n_episodes: int = 50
    methods: tuple[str, ...] = METHODS
    tpe_trials: int = 300
    motpe_trials: int = 300
    mc_samples: int = 200
    sigma_window: tuple[float, float] = (0.03, 0.05)
    mu_range: tuple[float, float] = (-80.0, 80.0)
    sigma_range: tuple[float, float] = (0.0, 0.5)
    gradient: GradientConfig = field(default_factory=GradientConfig)
    tpe: TPEConfig = field(default_factory=TPEConfig)
    signature_threshold: float = 0.5
    warmup_steps: int = 6
    target_step: int = 3


@dataclass
class Episode:
    index: int
    state_t: CableState
    image_t: np.ndarray
    target_image: np.ndarray
    target_joints: np.ndarray


@dataclass
class EvalRow:
    episode: int
    method: str
    joints: np.ndarray
    sigma: float
    g1: float
    emd_target_inferred: float
    emd_target_robot: float
    emd_robot_inferred: float


def make_episode(index: int, seed: int, sim: SimConfig, dims=DEFAULT_DIMS, cfg: SuiteConfig = SuiteConfig()) -> Episode:
    rng = np.random.default_rng([seed, index, 0])
    state = rest_state(sim)
    target_image = target_joints = None
    for step in range(1, cfg.warmup_steps + 1):
        state = execute_motion(state, sample_target(rng, sim), sim)
        if step == cfg.target_step:
            target_image, target_joints = observe(state, sim, dims), state.joints_deg.copy()
    return Episode(index, state, observe(state, sim, dims), target_image, target_joints)


def inferred_signature(img: np.ndarray, threshold: float, max_support: int = 400):
    """Signature of a (blurry) predicted image.

    If nothing clears ``threshold`` the cut drops to half the image peak, keeping
    at most the ``max_support`` brightest pixels so a diffuse prediction cannot
    blow up the transport problem.
    """
    if np.max(img) > threshold:
        return signature(img, threshold)
    cut = 0.5 * float(np.max(img))
    flat = np.sort(img, axis=None)
    if np.count_nonzero(flat > cut) > max_support:
        cut = float(flat[-max_support - 1])
    return signature(img, cut)


def run_method(method: str, ep: Episode, model: ForwardModel, sim: SimConfig, seed: int, cfg: SuiteConfig):
    stream = [seed, ep.index, 1 + _METHOD_STREAM[method]]
    opt_seed = int(np.random.default_rng(stream).integers(2**31))
    # Episode-level noise seed: the same Monte Carlo draws for every trial.
    noise_seed = int(np.random.default_rng([seed, ep.index, 99]).integers(2**31))
    prob = InferenceProblem(model, ep.image_t, ep.state_t.joints_deg, ep.target_image,
                            sim.arm.joint_limits_deg, m=cfg.mc_samples, noise_seed=noise_seed)
    if method == "gradient":
        res = run_gradient(prob, opt_seed, "mse", cfg.gradient, cfg.mu_range)
    elif method == "gradient_dist":
        res = run_gradient(prob, opt_seed, "distance_image", cfg.gradient, cfg.mu_range)
    elif method == "tpe":
        res = run_tpe(prob, cfg.tpe_trials, opt_seed, cable_space(cfg.mu_range, None), cfg.tpe)
    elif method == "motpe":
        res = run_motpe(prob, cfg.motpe_trials, opt_seed, cable_space(cfg.mu_range, cfg.sigma_range), cfg.tpe,
                        cfg.sigma_window)
    else:
        raise ValueError(f"unknown method {method!r}")
    return prob, res


def evaluate_episode(ep: Episode, model: ForwardModel, sim: SimConfig, seed: int, cfg: SuiteConfig) -> list[EvalRow]:
    rows = []
    target_sig = signature(ep.target_image, cfg.signature_threshold)
    for method in cfg.methods:
        try:
            prob, res = run_method(method, ep, model, sim, seed, cfg)
        except Exception as exc:  # noqa: BLE001 - re-raised with the stage tag
            raise StageError("optimize", f"episode {ep.index}, {method}: {exc}") from exc
        try:
            executed = execute_motion(ep.state_t, res.joints_deg, sim)
        except Exception as exc:  # noqa: BLE001
            raise StageError("execute", f"episode {ep.index}, {method}: {exc}") from exc
        robot_img = observe(executed, sim, (ep.image_t.shape[1], ep.image_t.shape[0]))
        q = normalize_joints(res.joints_deg, sim.arm.joint_limits_deg)
        inferred = prob.predict(q)
        g1 = prob.g1(res.joints_deg, res.sigma)
        robot_sig = signature(robot_img, cfg.signature_threshold)
        inf_sig = inferred_signature(inferred, cfg.signature_threshold)
        rows.append(EvalRow(
            ep.index, method, np.asarray(res.joints_deg, dtype=float), float(res.sigma), g1,
            emd(target_sig, inf_sig), emd(target_sig, robot_sig), emd(robot_sig, inf_sig),
        ))
    return rows


def run_one_episode(index: int, model: ForwardModel, sim: SimConfig, seed: int, cfg: SuiteConfig,
                    dims) -> list[EvalRow]:
    try:
        ep = make_episode(index, seed, sim, dims, cfg)
    except Exception as exc:  # noqa: BLE001
        raise StageError("episode", f"episode {index}: {exc}") from exc
    return evaluate_episode(ep, model, sim, seed, cfg)


def run_episode_suite(model: ForwardModel, sim: SimConfig, seed: int, cfg: SuiteConfig = SuiteConfig(),
                      dims=None, progress=None, workers: int = 1) -> list[EvalRow]:
    """All episodes in index order. Episodes are independent, so ``workers > 1`` runs them in
    separate processes; results are merged by index and do not depend on the worker count."""
    dims = dims or (model.arch.width, model.arch.height)
    per_episode: dict[int, list[EvalRow]] = {}
    if workers <= 1:
        for i in range(cfg.n_episodes):
            per_episode[i] = run_one_episode(i, model, sim, seed, cfg, dims)
            if progress is not None:
                progress(i, per_episode[i])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_one_episode, i, model, sim, seed, cfg, dims): i for i in range(cfg.n_episodes)}
            for fut in as_completed(futures):
                i = futures[fut]
                per_episode[i] = fut.result()
                if progress is not None:
                    progress(i, per_episode[i])
    return [row for i in sorted(per_episode) for row in per_episode[i]]


# -- CSV -------------------------------------------------------------------
EPISODE_FIELDS = ["episode", "method", "j1", "j2", "j3", "sigma", "g1",
                  "emd_target_inferred", "emd_target_robot", "emd_robot_inferred"]


def rows_to_csv(rows: list[EvalRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EPISODE_FIELDS)
    for r in rows:
        w.writerow([r.episode, r.method, *(repr(float(v)) for v in r.joints), repr(r.sigma), repr(r.g1),
                    repr(r.emd_target_inferred), repr(r.emd_target_robot), repr(r.emd_robot_inferred)])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[EvalRow]:
    reader = csv.DictReader(io.StringIO(text))
    missing = set(EPISODE_FIELDS) - set(reader.fieldnames or [])
    if missing:
        raise ValueError(f"episode CSV lacks columns {sorted(missing)}")
    return [EvalRow(int(d["episode"]), d["method"], np.array([float(d["j1"]), float(d["j2"]), float(d["j3"])]),
                    float(d["sigma"]), float(d["g1"]), float(d["emd_target_inferred"]),
                    float(d["emd_target_robot"]), float(d["emd_robot_inferred"])) for d in reader]


def costs_by(rows: list[EvalRow], pairing: str) -> dict[str, np.ndarray]:
    out: dict[str, list[float]] = {}
    for r in rows:
        out.setdefault(r.method, []).append(getattr(r, f"emd_{pairing}"))
    return {k: np.array(v) for k, v in out.items()}


def percentile_thresholds(rows: list[EvalRow], pairing: str, percentiles=(30, 45)) -> tuple[float, ...]:
    pooled = np.concatenate(list(costs_by(rows, pairing).values()))
    return tuple(float(np.percentile(pooled, p)) for p in percentiles)


def summary_table(rows: list[EvalRow], thresholds: dict[str, tuple[float, ...]] | None = None,
                  n_resamples: int = 1000, seed: int = 0) -> list[dict]:
    """Per pairing and method: EMD mean/std and bootstrap success rates (percent)."""
    table = []
    for pairing in PAIRINGS:
        taus = (thresholds or {}).get(pairing) or percentile_thresholds(rows, pairing)
        for method, c in costs_by(rows, pairing).items():
            row = {"pairing": pairing, "method": method, "n": int(c.size),
                   "emd_mean": float(np.mean(c)), "emd_std": float(np.std(c, ddof=1)) if c.size > 1 else 0.0}
            for k, tau in enumerate(taus, start=1):
                mean, std = bootstrap(c, success_rate_at(tau), n_resamples, seed)
                row[f"tau{k}"] = tau
                row[f"wn{k}_mean_pct"] = 100.0 * mean
                row[f"wn{k}_std_pct"] = 100.0 * std
            table.append(row)
    return table


def table_to_csv(table: list[dict]) -> str:
    if not table:
        raise ValueError("empty table")
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(table[0]), lineterminator="\n")
    w.writeheader()
    for row in table:
        w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()

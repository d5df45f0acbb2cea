"""Planar 3-DoF arm dragging a cable across a table.

The cable is a chain of point masses joined by damped springs. Node 0 is
rigidly attached to the end-effector; the others slide on the ground under
Coulomb friction (with a static threshold, so rest shapes stick) plus a small
viscous drag. Units are mm, s and degrees throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

GRAVITY_MM_S2 = 9810.0


class JointLimitError(ValueError):
    """A joint vector lies outside the arm's range of motion."""


class SimulationError(RuntimeError):
    """Integration produced a non-finite state; reduce ``dt_s``."""


@dataclass(frozen=True)
class ArmConfig:
    link_lengths_mm: tuple[float, float, float] = (80.0, 70.0, 70.0)
    joint_limits_deg: tuple[tuple[float, float], ...] = ((-90.0, 90.0),) * 3
    base_position_mm: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if len(self.link_lengths_mm) != 3 or min(self.link_lengths_mm) <= 0:
            raise ValueError("need three positive link lengths")
        if len(self.joint_limits_deg) != 3:
            raise ValueError("need one joint limit interval per joint")
        for lo, hi in self.joint_limits_deg:
            if not lo < hi:
                raise ValueError(f"empty joint interval [{lo}, {hi}]")

    @property
    def reach_mm(self) -> float:
        return float(sum(self.link_lengths_mm))

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.joint_limits_deg])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.joint_limits_deg])

    def check_limits(self, joints) -> np.ndarray:
        q = np.asarray(joints, dtype=float)
        if q.shape != (3,) or not np.all(np.isfinite(q)):
            raise JointLimitError(f"expected 3 finite joint angles, got {joints!r}")
        if np.any(q < self.lower) or np.any(q > self.upper):
            raise JointLimitError(f"joints {q.tolist()} outside limits {self.joint_limits_deg}")
        return q


@dataclass(frozen=True)
class CableConfig:
    total_length_mm: float = 250.0
    node_count: int = 25
    stiffness: float = 9.0e4
    damping: float = 30.0
    ground_friction: float = 0.3
    static_friction: float = 0.45
    drag: float = 0.5
    node_mass: float = 1.0
    dt_s: float = 0.002

    def __post_init__(self):
        if self.node_count < 2:
            raise ValueError("cable needs at least 2 nodes")
        if self.total_length_mm <= 0 or self.dt_s <= 0:
            raise ValueError("cable length and dt must be positive")
        for name in ("stiffness", "damping", "ground_friction", "node_mass"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.static_friction < self.ground_friction or self.drag < 0:
            raise ValueError("static friction must be >= kinetic friction, drag >= 0")

    @property
    def rest_length_mm(self) -> float:
        return self.total_length_mm / (self.node_count - 1)


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned table rectangle centred on the origin of the world frame."""

    width_mm: float = 785.0
    height_mm: float = 515.0

    def __post_init__(self):
        if self.width_mm <= 0 or self.height_mm <= 0:
            raise ValueError("workspace dimensions must be positive")


@dataclass(frozen=True)
class SimConfig:
    arm: ArmConfig = field(default_factory=ArmConfig)
    cable: CableConfig = field(default_factory=CableConfig)
    workspace: Workspace = field(default_factory=Workspace)
    motion_time_s: float = 0.25
    settle_speed_mm_s: float = 1.0
    settle_timeout_s: float = 5.0


@dataclass(frozen=True)
class CableState:
    node_positions_mm: np.ndarray
    node_velocities_mm_s: np.ndarray
    joints_deg: np.ndarray

    def to_dict(self) -> dict:
        return {
            "joints_deg": self.joints_deg.tolist(),
            "node_positions_mm": self.node_positions_mm.tolist(),
            "node_velocities_mm_s": self.node_velocities_mm_s.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CableState":
        pos = np.asarray(d["node_positions_mm"], dtype=float)
        vel = np.asarray(d.get("node_velocities_mm_s", np.zeros_like(pos)), dtype=float)
        joints = np.asarray(d["joints_deg"], dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or vel.shape != pos.shape or joints.shape != (3,):
            raise ValueError("malformed cable state")
        return cls(pos, vel, joints)


@dataclass(frozen=True)
class MotionResult:
    final: CableState
    motion_end: CableState
    peak_kinetic_energy: float
    settle_kinetic_energy: float
    n_steps: int
    settled: bool


def _chain(link_lengths, joints_deg):
    """Cumulative-angle planar chain; works on (..., 3) joint arrays."""
    theta = np.cumsum(np.deg2rad(joints_deg), axis=-1)
    lengths = np.asarray(link_lengths, dtype=float)
    x = np.sum(lengths * np.cos(theta), axis=-1)
    y = np.sum(lengths * np.sin(theta), axis=-1)
    return x, y, theta[..., -1]


def forward_kinematics(arm: ArmConfig, joints) -> np.ndarray:
    """End-effector position (mm, world frame) for joint angles in degrees."""
    q = arm.check_limits(joints)
    x, y, _ = _chain(arm.link_lengths_mm, q)
    return np.array([x, y]) + np.asarray(arm.base_position_mm, dtype=float)


def forward_kinematics_batch(arm: ArmConfig, joints) -> np.ndarray:
    """Unchecked vectorised FK: (N, 3) joints -> (N, 2) points."""
    q = np.asarray(joints, dtype=float)
    x, y, _ = _chain(arm.link_lengths_mm, q)
    return np.stack([x, y], axis=-1) + np.asarray(arm.base_position_mm, dtype=float)


def in_workspace(point_mm, ws: Workspace) -> bool:
    """Closed-rectangle membership test."""
    x, y = float(point_mm[0]), float(point_mm[1])
    return abs(x) <= ws.width_mm / 2 and abs(y) <= ws.height_mm / 2


def rest_state(cfg: SimConfig, joints=(0.0, 0.0, 0.0)) -> CableState:
    """Straight cable continuing the last link's direction, at rest."""
    q = cfg.arm.check_limits(joints)
    x, y, heading = _chain(cfg.arm.link_lengths_mm, q)
    tip = np.array([x, y]) + np.asarray(cfg.arm.base_position_mm, dtype=float)
    s = np.arange(cfg.cable.node_count) * cfg.cable.rest_length_mm
    pos = tip + s[:, None] * np.array([np.cos(heading), np.sin(heading)])
    return CableState(pos, np.zeros_like(pos), q)


def kinetic_energy(cfg: CableConfig, velocities: np.ndarray) -> float:
    return 0.5 * cfg.node_mass * float(np.sum(velocities**2))


def _step(pos, vel, tip, tip_vel, c: CableConfig):
    """One semi-implicit Euler step; node 0 is kinematically driven."""
    dt = c.dt_s
    d = pos[1:] - pos[:-1]
    length = np.sqrt(np.sum(d * d, axis=1))
    u = d / length[:, None]
    rel = np.sum((vel[1:] - vel[:-1]) * u, axis=1)
    f_seg = (c.stiffness * (length - c.rest_length_mm) + c.damping * rel)[:, None] * u
    force = np.zeros_like(pos)
    force[:-1] += f_seg
    force[1:] -= f_seg

    kinetic = c.ground_friction * c.node_mass * GRAVITY_MM_S2
    static = c.static_friction * c.node_mass * GRAVITY_MM_S2
    speed = np.sqrt(np.sum(vel * vel, axis=1))
    stuck = (speed == 0.0) & (np.sqrt(np.sum(force * force, axis=1)) <= static)

    v_new = vel + (dt / c.node_mass) * force
    v_new /= 1.0 + dt * c.drag / c.node_mass
    s_new = np.sqrt(np.sum(v_new * v_new, axis=1))
    # Kinetic friction removes a fixed speed per step and cannot reverse motion.
    dv = dt * kinetic / c.node_mass
    scale = np.where(s_new > dv, 1.0 - dv / np.where(s_new > 0, s_new, 1.0), 0.0)
    v_new *= scale[:, None]
    v_new[stuck] = 0.0

    v_new[0] = tip_vel
    pos_new = pos + dt * v_new
    pos_new[0] = tip
    return pos_new, v_new


def simulate_motion(state: CableState, target, cfg: SimConfig) -> MotionResult:
    """Move the arm to ``target`` at constant joint rate, then let the cable settle."""
    arm, c = cfg.arm, cfg.cable
    q1 = arm.check_limits(target)
    q0 = arm.check_limits(state.joints_deg)
    pos = np.array(state.node_positions_mm, dtype=float)
    vel = np.array(state.node_velocities_mm_s, dtype=float)
    if pos.shape != (c.node_count, 2) or vel.shape != pos.shape:
        raise ValueError(f"state has {pos.shape[0]} nodes, config expects {c.node_count}")

    dt = c.dt_s
    n_motion = max(1, int(round(cfg.motion_time_s / dt)))
    n_max = n_motion + int(round(cfg.settle_timeout_s / dt))
    base = np.asarray(arm.base_position_mm, dtype=float)
    still = bool(np.array_equal(q0, q1))

    peak = kinetic_energy(c, vel)
    tip_prev = forward_kinematics(arm, q0)
    motion_end = state
    settle_ke = peak
    settled = False
    step = 0
    for step in range(1, n_max + 1):
        if still or step >= n_motion:
            q = q1
        else:
            q = q0 + (q1 - q0) * (step / n_motion)
        x, y, _ = _chain(arm.link_lengths_mm, q)
        tip = np.array([x, y]) + base
        pos, vel = _step(pos, vel, tip, (tip - tip_prev) / dt, c)
        tip_prev = tip
        ke = kinetic_energy(c, vel)
        peak = max(peak, ke)
        if step % 50 == 0 and not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise SimulationError(f"non-finite cable state at step {step}; reduce dt")
        if step == n_motion:
            motion_end = CableState(pos.copy(), vel.copy(), q1.copy())
        if step >= n_motion and np.max(np.sum(vel * vel, axis=1)) < cfg.settle_speed_mm_s**2:
            settle_ke = ke
            settled = True
            break
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
        raise SimulationError("non-finite cable state; reduce dt")
    if not settled:
        settle_ke = kinetic_energy(c, vel)
    else:
        # Residual sub-threshold speeds are removed by static friction within a step.
        vel = np.zeros_like(vel)
    final = CableState(pos, vel, q1.copy())
    if step < n_motion:
        motion_end = final
    return MotionResult(final, motion_end, peak, settle_ke, step, settled)


def execute_motion(state: CableState, target, cfg: SimConfig) -> CableState:
    return simulate_motion(state, target, cfg).final


def with_overrides(cfg: SimConfig, **kw) -> SimConfig:
    """Convenience for tests: replace nested fields by ``section__name`` keys."""
    parts = {"arm": {}, "cable": {}, "workspace": {}}
    top = {}
    for key, value in kw.items():
        if "__" in key:
            sec, name = key.split("__", 1)
            parts[sec][name] = value
        else:
            top[key] = value
    return replace(
        cfg,
        arm=replace(cfg.arm, **parts["arm"]),
        cable=replace(cfg.cable, **parts["cable"]),
        workspace=replace(cfg.workspace, **parts["workspace"]),
        **top,
    )

"""Random-motion data collection and the on-disk transition format.

File layout (little-endian)::

    b"CABLEDS1" | u32 count | u32 width | u32 height
    count x ( f32[3] J_t | f32[3] J_t+1 | u8[h*w] I_t | u8[h*w] I_t+1 )

Joints are stored normalised to [0, 1]; the joint limits needed to undo the
normalisation live in a JSON sidecar next to the file (``<path>.json``).
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .imaging import DEFAULT_DIMS, dilate, render
from .sim import CableState, SimConfig, execute_motion, forward_kinematics, in_workspace, rest_state

MAGIC = b"CABLEDS1"


class ConfigurationError(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


@dataclass
class Dataset:
    images_t: np.ndarray  # (n, h, w) float in [0, 1]
    joints_t: np.ndarray  # (n, 3) normalised
    joints_t1: np.ndarray
    images_t1: np.ndarray
    joint_limits_deg: tuple = ((-90.0, 90.0),) * 3

    def __len__(self) -> int:
        return len(self.joints_t)

    @property
    def dims(self) -> tuple[int, int]:
        return self.images_t.shape[2], self.images_t.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.images_t[idx], self.joints_t[idx], self.joints_t1[idx], self.images_t1[idx],
            self.joint_limits_deg,
        )


def _limits(limits) -> tuple[np.ndarray, np.ndarray]:
    lim = np.asarray(limits, dtype=float).reshape(-1, 2)
    return lim[:, 0], lim[:, 1]


def normalize_joints(raw_deg, limits=((-90.0, 90.0),) * 3) -> np.ndarray:
    lo, hi = _limits(limits)
    q = np.asarray(raw_deg, dtype=float)
    if np.any(q < lo) or np.any(q > hi):
        raise ValueError(f"joints {np.asarray(q).tolist()} outside limits")
    return (q - lo) / (hi - lo)


def denormalize_joints(norm, limits=((-90.0, 90.0),) * 3) -> np.ndarray:
    lo, hi = _limits(limits)
    return lo + np.asarray(norm, dtype=float) * (hi - lo)


def observe(state: CableState, cfg: SimConfig, dims=DEFAULT_DIMS) -> np.ndarray:
    """What the overhead camera sees: the rendered cable, thickened by one dilation."""
    return dilate(render(state, cfg.workspace, dims))


def sample_target(rng: np.random.Generator, cfg: SimConfig, max_draws: int = 10_000) -> np.ndarray:
    """Uniform joint target, redrawn until the end-effector lies on the table."""
    lo, hi = cfg.arm.lower, cfg.arm.upper
    for _ in range(max_draws):
        q = rng.uniform(lo, hi)
        if in_workspace(forward_kinematics(cfg.arm, q), cfg.workspace):
            return q
    raise ConfigurationError(f"no in-workspace joint target after {max_draws} draws")


def collect(
    n_steps: int,
    seed: int,
    cfg: SimConfig | None = None,
    dims=DEFAULT_DIMS,
    start: CableState | None = None,
    max_draws: int = 10_000,
) -> Dataset:
    """Run ``n_steps`` random motions and pair consecutive settled snapshots."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    cfg = cfg or SimConfig()
    rng = np.random.default_rng(seed)
    limits = cfg.arm.joint_limits_deg
    state = start if start is not None else rest_state(cfg)
    img = observe(state, cfg, dims)
    width, height = int(dims[0]), int(dims[1])
    images = np.empty((n_steps + 1, height, width))
    joints = np.empty((n_steps + 1, 3))
    images[0], joints[0] = img, state.joints_deg
    for i in range(1, n_steps + 1):
        target = sample_target(rng, cfg, max_draws)
        state = execute_motion(state, target, cfg)
        images[i], joints[i] = observe(state, cfg, dims), state.joints_deg
    norm = normalize_joints(joints, limits)
    return Dataset(images[:-1], norm[:-1], norm[1:], images[1:], limits)


def split(ds: Dataset, train_fraction: float = 5 / 6, seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = len(ds)
    n_train = int(round(n * train_fraction))
    if n_train < 1 or n_train >= n:
        raise ValueError(f"split of {n} records at {train_fraction} leaves an empty part")
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


def _to_u8(imgs: np.ndarray) -> np.ndarray:
    return np.round(np.clip(imgs, 0.0, 1.0) * 255).astype(np.uint8)


def save(ds: Dataset, path: str | os.PathLike) -> None:
    n = len(ds)
    width, height = ds.dims
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<3I", n, width, height))
        joints = np.concatenate([ds.joints_t, ds.joints_t1], axis=1).astype("<f4")
        a, b = _to_u8(ds.images_t).reshape(n, -1), _to_u8(ds.images_t1).reshape(n, -1)
        rec = np.zeros(n, dtype=[("j", "<f4", 6), ("a", "u1", width * height), ("b", "u1", width * height)])
        rec["j"], rec["a"], rec["b"] = joints, a, b
        fh.write(rec.tobytes())
    with open(f"{os.fspath(path)}.json", "w") as fh:
        json.dump({"joint_limits_deg": [list(x) for x in ds.joint_limits_deg]}, fh)


def load(path: str | os.PathLike) -> Dataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic")
    if len(raw) < 20:
        raise DatasetFormatError(f"{path}: truncated header")
    n, width, height = struct.unpack("<3I", raw[8:20])
    dtype = np.dtype([("j", "<f4", 6), ("a", "u1", width * height), ("b", "u1", width * height)])
    if len(raw) - 20 != n * dtype.itemsize:
        raise DatasetFormatError(f"{path}: header says {n} records, payload disagrees")
    rec = np.frombuffer(raw[20:], dtype=dtype, count=n)
    limits = ((-90.0, 90.0),) * 3
    sidecar = f"{os.fspath(path)}.json"
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            limits = tuple(tuple(x) for x in json.load(fh)["joint_limits_deg"])
    j = rec["j"].astype(float)
    shape = (n, height, width)
    return Dataset(
        rec["a"].reshape(shape) / 255.0, j[:, :3], j[:, 3:], rec["b"].reshape(shape) / 255.0, limits
    )

"""Action-conditioned forward model of the cable image.

``f(I_t, J_t, J_t+1) -> I_t+1`` is a small encoder/fusion/decoder network
written directly in numpy with hand-derived backward passes:

* image encoder: two stride-2 3x3 convolutions (ReLU), flattened;
* joint encoder: two dense tanh layers on the six normalised joint values;
* fusion: dense tanh layer on the concatenation;
* decoder: dense layer to ``height * width`` logits and a logistic sigmoid.

Arrays use NHWC layout. Parameters are float64 in memory and float32 on disk.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import Dataset

MAGIC = b"CABLEFM1"


class TrainingError(RuntimeError):
    def __init__(self, message, checkpoint=None, history=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.history = history


@dataclass(frozen=True)
class Architecture:
    width: int = 64
    height: int = 42
    conv_channels: tuple[int, ...] = (8, 16)
    joint_hidden: tuple[int, ...] = (32, 32)
    fusion_hidden: int = 128
    image_bottleneck: int = 0  # 0 disables the dense layer after the convolutions

    def conv_shapes(self) -> list[tuple[int, int, int]]:
        """(height, width, channels) after each conv layer."""
        h, w, shapes = self.height, self.width, []
        for ch in self.conv_channels:
            h, w = (h - 1) // 2 + 1, (w - 1) // 2 + 1
            shapes.append((h, w, ch))
        return shapes

    @property
    def image_features(self) -> int:
        if self.image_bottleneck:
            return self.image_bottleneck
        return self.conv_features

    @property
    def conv_features(self) -> int:
        if not self.conv_channels:
            return self.height * self.width
        h, w, c = self.conv_shapes()[-1]
        return h * w * c


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    max_steps: int | None = None
    target_mse: float | None = None
    restore_best: bool = True  # return the epoch with the lowest validation MSE

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning rate, batch size and epochs must be positive")


def _sigmoid(z):
    with np.errstate(over="ignore"):
        return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


def _im2col(xp, ho, wo):
    """Stride-2 3x3 patches of a padded NHWC batch -> (N, ho, wo, 9*C)."""
    parts = [xp[:, ki:ki + 2 * ho - 1:2, kj:kj + 2 * wo - 1:2, :] for ki in range(3) for kj in range(3)]
    return np.concatenate(parts, axis=-1)


def _col2im(dcols, shape, ho, wo):
    n, hp, wp, c = shape
    dxp = np.zeros(shape)
    for k in range(9):
        ki, kj = divmod(k, 3)
        dxp[:, ki:ki + 2 * ho - 1:2, kj:kj + 2 * wo - 1:2, :] += dcols[..., k * c:(k + 1) * c]
    return dxp


class ForwardModel:
    def __init__(self, arch: Architecture = Architecture(), seed: int = 0, params: dict | None = None):
        self.arch = arch
        self.params = params if params is not None else self._init(seed)

    def _init(self, seed):
        rng = np.random.default_rng(seed)
        a, p = self.arch, {}
        c_in = 1
        for i, ch in enumerate(a.conv_channels):
            p[f"conv{i}.w"] = rng.normal(0, np.sqrt(2.0 / (9 * c_in)), (9 * c_in, ch))
            p[f"conv{i}.b"] = np.zeros(ch)
            c_in = ch
        d_in = 6
        for i, hdim in enumerate(a.joint_hidden):
            p[f"joint{i}.w"] = rng.normal(0, np.sqrt(1.0 / d_in), (d_in, hdim))
            p[f"joint{i}.b"] = np.zeros(hdim)
            d_in = hdim
        if a.image_bottleneck:
            p["img.w"] = rng.normal(0, np.sqrt(1.0 / a.conv_features), (a.conv_features, a.image_bottleneck))
            p["img.b"] = np.zeros(a.image_bottleneck)
        d_img = a.image_features
        p["fuse_img.w"] = rng.normal(0, np.sqrt(1.0 / (d_img + d_in)), (d_img, a.fusion_hidden))
        p["fuse_joint.w"] = rng.normal(0, np.sqrt(1.0 / (d_img + d_in)), (d_in, a.fusion_hidden))
        p["fuse.b"] = np.zeros(a.fusion_hidden)
        p["out.w"] = rng.normal(0, np.sqrt(1.0 / a.fusion_hidden), (a.fusion_hidden, a.height * a.width))
        # Start dark: most pixels are background.
        p["out.b"] = np.full(a.height * a.width, -3.0)
        return p

    @property
    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def copy(self) -> "ForwardModel":
        return ForwardModel(self.arch, params={k: v.copy() for k, v in self.params.items()})

    def _check(self, images, joints):
        a = self.arch
        if images.shape[1:] != (a.height, a.width):
            raise ValueError(f"image shape {images.shape[1:]} != model dims {(a.height, a.width)}")
        if joints.shape[1:] != (6,) or joints.shape[0] != images.shape[0]:
            raise ValueError("joints must be (N, 6) and match the image batch")

    # -- image branch -----------------------------------------------------
    def _encode(self, images, cache=None):
        x = images[..., None]
        for i, _ in enumerate(self.arch.conv_channels):
            n, h, w, _c = x.shape
            ho, wo = (h - 1) // 2 + 1, (w - 1) // 2 + 1
            xp = np.pad(x, ((0, 0), (1, 2 * ho - h), (1, 2 * wo - w), (0, 0)))
            cols = _im2col(xp, ho, wo)
            z = cols @ self.params[f"conv{i}.w"] + self.params[f"conv{i}.b"]
            if cache is not None:
                cache.append((xp.shape, cols, z, x.shape))
            x = np.maximum(z, 0.0)
        feat = x.reshape(len(images), -1)
        if self.arch.image_bottleneck:
            conv_feat = feat
            feat = np.tanh(feat @ self.params["img.w"] + self.params["img.b"])
            if cache is not None:
                cache.append((conv_feat, feat))
        return feat

    def _encode_backward(self, dfeat, cache, grads):
        dx = dfeat
        if self.arch.image_bottleneck:
            conv_feat, feat = cache[-1]
            dz = dfeat * (1.0 - feat**2)
            grads["img.w"] = conv_feat.T @ dz
            grads["img.b"] = dz.sum(axis=0)
            dx = dz @ self.params["img.w"].T
        for i in reversed(range(len(self.arch.conv_channels))):
            xp_shape, cols, z, x_shape = cache[i]
            dz = dx.reshape(z.shape) * (z > 0)
            n, ho, wo, ch = z.shape
            grads[f"conv{i}.w"] = cols.reshape(-1, cols.shape[-1]).T @ dz.reshape(-1, ch)
            grads[f"conv{i}.b"] = dz.sum(axis=(0, 1, 2))
            if i == 0:
                break
            dcols = dz @ self.params[f"conv{i}.w"].T
            dxp = _col2im(dcols, xp_shape, ho, wo)
            dx = dxp[:, 1:1 + x_shape[1], 1:1 + x_shape[2], :]

    # -- joint branch -----------------------------------------------------
    def _joint_forward(self, joints):
        acts = [joints]
        h = joints
        for i, _ in enumerate(self.arch.joint_hidden):
            h = np.tanh(h @ self.params[f"joint{i}.w"] + self.params[f"joint{i}.b"])
            acts.append(h)
        return acts

    def _joint_backward(self, dh, acts, grads=None):
        for i in reversed(range(len(self.arch.joint_hidden))):
            dz = dh * (1.0 - acts[i + 1] ** 2)
            if grads is not None:
                grads[f"joint{i}.w"] = acts[i].T @ dz
                grads[f"joint{i}.b"] = dz.sum(axis=0)
            dh = dz @ self.params[f"joint{i}.w"].T
        return dh

    # -- full network -----------------------------------------------------
    def forward(self, images, joints):
        """Batch prediction ``(N, h, w)`` from images ``(N, h, w)`` and joints ``(N, 6)``."""
        images = np.asarray(images, dtype=float)
        joints = np.asarray(joints, dtype=float)
        self._check(images, joints)
        return self._forward(images, joints)[0]

    def _forward(self, images, joints, keep=False):
        p = self.params
        enc_cache = [] if keep else None
        feat = self._encode(images, enc_cache)
        acts = self._joint_forward(joints)
        hidden = np.tanh(feat @ p["fuse_img.w"] + acts[-1] @ p["fuse_joint.w"] + p["fuse.b"])
        out = _sigmoid(hidden @ p["out.w"] + p["out.b"])
        out = out.reshape(len(images), self.arch.height, self.arch.width)
        return out, (feat, acts, hidden, enc_cache)

    def loss_and_grads(self, images, joints, targets):
        """Halved mean over records of the per-image squared error, and its parameter gradients."""
        n = len(images)
        out, (feat, acts, hidden, enc_cache) = self._forward(images, joints, keep=True)
        diff = out - targets
        loss = 0.5 * float(np.sum(diff**2)) / n
        p, g = self.params, {}
        y = out.reshape(n, -1)
        dz = diff.reshape(n, -1) * y * (1.0 - y) / n
        g["out.w"] = hidden.T @ dz
        g["out.b"] = dz.sum(axis=0)
        dzh = (dz @ p["out.w"].T) * (1.0 - hidden**2)
        g["fuse_img.w"] = feat.T @ dzh
        g["fuse_joint.w"] = acts[-1].T @ dzh
        g["fuse.b"] = dzh.sum(axis=0)
        self._joint_backward(dzh @ p["fuse_joint.w"].T, acts, g)
        if self.arch.conv_channels or self.arch.image_bottleneck:
            self._encode_backward(dzh @ p["fuse_img.w"].T, enc_cache, g)
        return loss, float(np.mean(diff**2)), g

    def condition(self, image_t, joints_t) -> "ConditionedModel":
        return ConditionedModel(self, image_t, joints_t)


class ConditionedModel:
    """Forward model with ``I_t`` and ``J_t`` frozen; only ``J_t+1`` varies.

    Read-only after construction, so it can be shared between threads.
    """

    def __init__(self, model: ForwardModel, image_t, joints_t):
        a = model.arch
        image_t = np.asarray(image_t, dtype=float)
        joints_t = np.asarray(joints_t, dtype=float).reshape(3)
        if image_t.shape != (a.height, a.width):
            raise ValueError(f"image shape {image_t.shape} != model dims {(a.height, a.width)}")
        self.model = model
        self.joints_t = joints_t
        p = model.params
        feat = model._encode(image_t[None])
        self._fixed = (feat @ p["fuse_img.w"])[0] + p["fuse.b"]

    def _forward(self, joints_t1):
        q = np.atleast_2d(np.asarray(joints_t1, dtype=float))
        if q.shape[1] != 3:
            raise ValueError("J_t+1 must have 3 entries")
        joints = np.concatenate([np.broadcast_to(self.joints_t, q.shape), q], axis=1)
        m = self.model
        acts = m._joint_forward(joints)
        hidden = np.tanh(self._fixed + acts[-1] @ m.params["fuse_joint.w"])
        out = _sigmoid(hidden @ m.params["out.w"] + m.params["out.b"])
        return out, acts, hidden

    def predict(self, joints_t1) -> np.ndarray:
        """``(N, h, w)`` predictions for ``(N, 3)`` normalised targets (or ``(h, w)`` for one)."""
        single = np.ndim(joints_t1) == 1
        out = self._forward(joints_t1)[0]
        a = self.model.arch
        out = out.reshape(-1, a.height, a.width)
        return out[0] if single else out

    def input_gradient(self, joints_t1, dcost_dpred) -> np.ndarray:
        """Chain a cost gradient w.r.t. the predicted image back to ``J_t+1``.

        ``dcost_dpred`` is a callable mapping the ``(N, h, w)`` prediction to
        ``(cost, dcost/dprediction)`` with cost of shape ``(N,)``.
        Returns ``(cost, grad)`` with grad of shape ``(N, 3)``.
        """
        single = np.ndim(joints_t1) == 1
        q = np.atleast_2d(np.asarray(joints_t1, dtype=float))
        m, a = self.model, self.model.arch
        out, acts, hidden = self._forward(q)
        pred = out.reshape(-1, a.height, a.width)
        cost, dpred = dcost_dpred(pred)
        dz = dpred.reshape(len(q), -1) * out * (1.0 - out)
        dzh = (dz @ m.params["out.w"].T) * (1.0 - hidden**2)
        dj = m._joint_backward(dzh @ m.params["fuse_joint.w"].T, acts)
        grad = dj[:, 3:]
        if single:
            return np.asarray(cost).reshape(-1)[0], grad[0]
        return np.asarray(cost).reshape(-1), grad


def predict(model: ForwardModel, image_t, joints_t, joints_t1) -> np.ndarray:
    """Single prediction of ``I_t+1`` with all joints normalised to [0, 1]."""
    return model.condition(image_t, joints_t).predict(np.asarray(joints_t1, dtype=float).reshape(3))


def _stack(ds: Dataset):
    return ds.images_t, np.concatenate([ds.joints_t, ds.joints_t1], axis=1), ds.images_t1


def evaluate_mse(model: ForwardModel, ds: Dataset, batch: int = 256) -> float:
    """Per-pixel mean squared error of the model on a dataset."""
    images, joints, targets = _stack(ds)
    total = 0.0
    for s in range(0, len(ds), batch):
        out = model.forward(images[s:s + batch], joints[s:s + batch])
        total += float(np.sum((out - targets[s:s + batch]) ** 2))
    return total / targets.size


def train(
    ds_train: Dataset,
    ds_val: Dataset | None = None,
    cfg: TrainConfig = TrainConfig(),
    arch: Architecture | None = None,
) -> tuple[ForwardModel, list[dict]]:
    """Mini-batch Adam on the halved squared-error likelihood loss."""
    if len(ds_train) == 0:
        raise ValueError("empty training set")
    width, height = ds_train.dims
    arch = arch or Architecture(width=width, height=height)
    if (arch.width, arch.height) != (width, height):
        raise ValueError("architecture dims do not match dataset dims")
    rng = np.random.default_rng(cfg.seed)
    model = ForwardModel(arch, seed=int(rng.integers(2**31)))
    images, joints, targets = _stack(ds_train)
    m1 = {k: np.zeros_like(v) for k, v in model.params.items()}
    m2 = {k: np.zeros_like(v) for k, v in model.params.items()}
    history: list[dict] = []
    last_good = model.copy()
    best, best_val = None, np.inf
    n, step = len(ds_train), 0
    b = min(cfg.batch_size, n)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for s in range(0, n - b + 1, b):
            idx = np.sort(order[s:s + b])
            loss, _mse, grads = model.loss_and_grads(images[idx], joints[idx], targets[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at step {step}", last_good, history)
            step += 1
            c1 = 1.0 - cfg.beta1**step
            c2 = 1.0 - cfg.beta2**step
            for k, g in grads.items():
                m1[k] = cfg.beta1 * m1[k] + (1 - cfg.beta1) * g
                m2[k] = cfg.beta2 * m2[k] + (1 - cfg.beta2) * g * g
                if cfg.weight_decay and k.endswith(".w"):
                    model.params[k] *= 1.0 - cfg.learning_rate * cfg.weight_decay
                model.params[k] -= cfg.learning_rate * (m1[k] / c1) / (np.sqrt(m2[k] / c2) + cfg.eps)
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
        train_mse = evaluate_mse(model, ds_train)
        if not np.isfinite(train_mse):
            raise TrainingError(f"non-finite loss after epoch {epoch}", last_good, history)
        last_good = model.copy()
        row = {"epoch": epoch, "steps": step, "train_mse": train_mse}
        if ds_val is not None and len(ds_val):
            row["val_mse"] = evaluate_mse(model, ds_val)
            if cfg.restore_best and row["val_mse"] < best_val:
                best, best_val = last_good, row["val_mse"]
        history.append(row)
        if cfg.target_mse is not None and train_mse < cfg.target_mse:
            break
        if cfg.max_steps is not None and step >= cfg.max_steps:
            break
    if best is not None:
        model = best
    return model, history


def save(model: ForwardModel, path: str | os.PathLike) -> None:
    desc = json.dumps({"architecture": asdict(model.arch), "params": [
        [k, list(v.shape)] for k, v in model.params.items()
    ]}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(desc)))
        fh.write(desc)
        for v in model.params.values():
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def load(path: str | os.PathLike) -> ForwardModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a forward-model checkpoint")
    (n,) = struct.unpack("<I", raw[8:12])
    desc = json.loads(raw[12:12 + n])
    a = desc["architecture"]
    arch = Architecture(
        width=a["width"], height=a["height"], conv_channels=tuple(a["conv_channels"]),
        joint_hidden=tuple(a["joint_hidden"]), fusion_hidden=a["fusion_hidden"],
        image_bottleneck=a.get("image_bottleneck", 0),
    )
    params, off = {}, 12 + n
    for name, shape in desc["params"]:
        size = int(np.prod(shape))
        chunk = raw[off:off + 4 * size]
        if len(chunk) != 4 * size:
            raise ValueError(f"{path}: truncated parameter blob")
        params[name] = np.frombuffer(chunk, dtype="<f4").astype(float).reshape(shape)
        off += 4 * size
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return ForwardModel(arch, params=params)

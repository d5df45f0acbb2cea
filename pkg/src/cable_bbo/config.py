"""Experiment configuration from a plain ``key = value`` file with sections.

Every key is optional; anything not given keeps the library default. The whole
file is parsed and validated before any work starts, and unknown sections or
keys are rejected. ``CABLE_BBO_SEED`` in the environment overrides the seed.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace

from .experiment import METHODS, SuiteConfig
from .model import Architecture, TrainConfig
from .optimizer import GradientConfig, TPEConfig
from .sim import ArmConfig, CableConfig, SimConfig, Workspace

SEED_ENV = "CABLE_BBO_SEED"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    dims: tuple[int, int] = (64, 42)
    dataset_steps: int = 3000
    train_fraction: float = 5 / 6
    arch: Architecture = field(default_factory=Architecture)
    train: TrainConfig = field(default_factory=TrainConfig)
    suite: SuiteConfig = field(default_factory=SuiteConfig)
    bootstrap_resamples: int = 1000
    percentiles: tuple[float, float] = (30.0, 45.0)
    seed: int = 0
    output_dir: str = "."

    def model_arch(self) -> Architecture:
        return replace(self.arch, width=self.dims[0], height=self.dims[1])


PAPER_SCALE = {"dataset_steps": 12000, "trials": 1000, "episodes": 150}


def paper_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    suite = replace(cfg.suite, n_episodes=PAPER_SCALE["episodes"], tpe_trials=PAPER_SCALE["trials"],
                    motpe_trials=PAPER_SCALE["trials"])
    return replace(cfg, dataset_steps=PAPER_SCALE["dataset_steps"], suite=suite)


# -- value parsers -----------------------------------------------------------
def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _pair(text: str) -> tuple[float, float]:
    v = _floats(text)
    if len(v) != 2:
        raise ValueError(f"expected two numbers, got {text!r}")
    return v


def _limits(text: str) -> tuple[tuple[float, float], ...]:
    """``-90:90, -90:90, -90:90``; a single ``lo:hi`` applies to every joint."""
    out = []
    for part in text.split(","):
        lo, sep, hi = part.strip().partition(":")
        if not sep:
            raise ValueError(f"joint limit {part!r} is not lo:hi")
        out.append((float(lo), float(hi)))
    return tuple(out)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _methods(text: str) -> tuple[str, ...]:
    names = tuple(t for t in text.replace(",", " ").split())
    bad = [n for n in names if n not in METHODS]
    if bad or not names:
        raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
    return names


# section -> key -> (target, parser); target is "obj.field" on an internal builder dict
_KEYS = {
    "sim": {
        "link_lengths": ("arm.link_lengths_mm", _floats),
        "joint_limits": ("arm.joint_limits_deg", _limits),
        "base_position": ("arm.base_position_mm", _pair),
        "cable_length": ("cable.total_length_mm", float),
        "node_count": ("cable.node_count", int),
        "stiffness": ("cable.stiffness", float),
        "damping": ("cable.damping", float),
        "friction": ("cable.ground_friction", float),
        "static_friction": ("cable.static_friction", float),
        "drag": ("cable.drag", float),
        "node_mass": ("cable.node_mass", float),
        "dt": ("cable.dt_s", float),
        "workspace": ("workspace", _pair),
        "motion_time": ("sim.motion_time_s", float),
        "settle_speed": ("sim.settle_speed_mm_s", float),
        "settle_timeout": ("sim.settle_timeout_s", float),
    },
    "imaging": {"width": ("top.width", int), "height": ("top.height", int)},
    "dataset": {
        "steps": ("top.dataset_steps", int),
        "train_fraction": ("top.train_fraction", float),
    },
    "model": {
        "conv_channels": ("arch.conv_channels", _ints),
        "joint_hidden": ("arch.joint_hidden", _ints),
        "fusion_hidden": ("arch.fusion_hidden", int),
        "image_bottleneck": ("arch.image_bottleneck", int),
        "learning_rate": ("train.learning_rate", float),
        "batch_size": ("train.batch_size", int),
        "epochs": ("train.epochs", int),
        "weight_decay": ("train.weight_decay", float),
        "restore_best": ("train.restore_best", _bool),
    },
    "optimizer": {
        "tpe_trials": ("suite.tpe_trials", int),
        "motpe_trials": ("suite.motpe_trials", int),
        "mc_samples": ("suite.mc_samples", int),
        "mu_range": ("suite.mu_range", _pair),
        "sigma_range": ("suite.sigma_range", _pair),
        "sigma_window": ("suite.sigma_window", _pair),
        "n_startup": ("tpe.n_startup", int),
        "n_candidates": ("tpe.n_candidates", int),
        "min_bandwidth": ("tpe.min_bandwidth", float),
        "prior_weight": ("tpe.prior_weight", float),
        "gradient_steps": ("gradient.steps", int),
        "gradient_learning_rate": ("gradient.learning_rate", float),
    },
    "metrics": {
        "signature_threshold": ("suite.signature_threshold", float),
        "percentiles": ("top.percentiles", _pair),
        "bootstrap_resamples": ("top.bootstrap_resamples", int),
    },
    "experiment": {
        "seed": ("top.seed", int),
        "output_dir": ("top.output_dir", str),
        "episodes": ("suite.n_episodes", int),
        "methods": ("suite.methods", _methods),
    },
}


def _assemble(groups: dict[str, dict]) -> ExperimentConfig:
    base = ExperimentConfig()
    sim = base.sim
    arm = replace(sim.arm, **groups.get("arm", {}))
    cable = replace(sim.cable, **groups.get("cable", {}))
    ws_size = groups.get("workspace")
    ws = Workspace(*ws_size) if ws_size else sim.workspace
    sim = replace(sim, arm=arm, cable=cable, workspace=ws, **groups.get("sim", {}))
    suite = replace(base.suite,
                    tpe=replace(base.suite.tpe, **groups.get("tpe", {})),
                    gradient=replace(base.suite.gradient, **groups.get("gradient", {})),
                    **groups.get("suite", {}))
    top = dict(groups.get("top", {}))
    width = top.pop("width", base.dims[0])
    height = top.pop("height", base.dims[1])
    cfg = replace(base, sim=sim, dims=(width, height), arch=replace(base.arch, **groups.get("arch", {})),
                  train=replace(base.train, **groups.get("train", {})), suite=suite, **top)
    return replace(cfg, arch=cfg.model_arch())


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    groups: dict[str, dict] = {}
    for section in parser.sections():
        keys = _KEYS.get(section)
        if keys is None:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            target, conv = keys[key]
            group, name = target.split(".") if "." in target else (target, None)
            try:
                value = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: [{section}] {key}: {exc}") from exc
            if name is None:
                groups[group] = value
            else:
                groups.setdefault(group, {})[name] = value
    try:
        return _assemble(groups)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path: str | None = None, env: dict | None = None) -> ExperimentConfig:
    """Read ``path`` (or defaults) and apply the seed override from the environment."""
    if path is None:
        cfg = ExperimentConfig()
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = parse_config(text, path)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            cfg = replace(cfg, seed=int(env[SEED_ENV]))
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={env[SEED_ENV]!r} is not an integer") from exc
    return cfg


__all__ = ["ConfigError", "ExperimentConfig", "ArmConfig", "CableConfig", "load_config", "parse_config",
           "paper_scale", "PAPER_SCALE", "SEED_ENV"]

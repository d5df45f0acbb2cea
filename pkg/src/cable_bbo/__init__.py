"""Learned cable forward model with TPE / MOTPE joint-command search, on a simulated planar arm."""
from . import dataset, experiment, ik, imaging, metrics, model, optimizer, sim
from .config import ExperimentConfig, load_config, parse_config

__version__ = "0.1.0"

__all__ = ["dataset", "experiment", "ik", "imaging", "metrics", "model", "optimizer", "sim",
           "ExperimentConfig", "load_config", "parse_config"]

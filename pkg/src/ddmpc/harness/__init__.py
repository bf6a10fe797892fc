"""Reproducible experiments on the cable-arm surrogate."""

from .config import ExperimentConfig, load_config
from .experiments import EXPERIMENTS

__all__ = ["EXPERIMENTS", "ExperimentConfig", "load_config"]

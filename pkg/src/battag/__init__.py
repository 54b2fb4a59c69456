"""Token tagging on imbalanced data with BAT encoders and contrastive losses."""

from .autodiff import Tensor, backward, no_grad
from .config import ExperimentConfig, load_config, tiny_experiment
from .data import SyntheticSpec, generate_dataset
from .metrics import confusion, report
from .model import ModelConfig, build_baseline_transformer, build_bat, build_model
from .objectives import DatasetStats, LossBatch, LossSpec, aggregated_gradient, make_weights
from .schedule import ScheduleSpec, named_variant, solve_beta
from .training import train

__all__ = [
    "DatasetStats",
    "ExperimentConfig",
    "LossBatch",
    "LossSpec",
    "ModelConfig",
    "ScheduleSpec",
    "SyntheticSpec",
    "Tensor",
    "aggregated_gradient",
    "backward",
    "build_baseline_transformer",
    "build_bat",
    "build_model",
    "confusion",
    "generate_dataset",
    "load_config",
    "make_weights",
    "named_variant",
    "no_grad",
    "report",
    "solve_beta",
    "tiny_experiment",
    "train",
]
__version__ = "0.1.0"

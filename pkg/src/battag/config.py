"""Experiment configuration file (JSON).

Example::

    {
      "model": {"n_layers": 1, "d_model": 8, "d_ff": 32, "heads": 2},
      "loss": {"family": "PBP", "gamma": 0, "lambda": 8,
               "weight_scheme": "ee", "log_base": "natural"},
      "schedule": {"name": "v4*1.001", "warmup": 200},
      "synthetic": {"ratios": [21.2, 1.9, 1], "vocab_size": 200, "seed": 0},
      "batch_size": 8, "epochs": 50, "eval_fraction": 0.2, "seed": 0,
      "output_dir": "runs/pbp"
    }

``model.vocab_size`` and ``model.n_classes`` default to the synthetic
data's values. ``schedule`` is either a variant name or
``{"alpha", "beta"?, "lambda", "warmup"}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .data import SyntheticSpec
from .errors import ConfigError
from .model import ModelConfig
from .objectives import COMPATIBLE, FAMILIES
from .schedule import ScheduleSpec


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    loss: dict = field(default_factory=lambda: {"family": "CE"})
    schedule: dict = field(default_factory=lambda: {"name": "v1"})
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    batch_size: int = 8
    epochs: int = 50
    eval_fraction: float = 0.2
    eval_batch_size: int = 64
    seed: int = 0
    output_dir: str = "runs/default"

    def __post_init__(self):
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ConfigError(f"eval_fraction must lie in (0, 1), got {self.eval_fraction}")
        if self.model.n_classes != self.synthetic.n_classes:
            raise ConfigError("model.n_classes does not match the synthetic class count")
        if self.model.vocab_size < self.synthetic.vocab_size:
            raise ConfigError("model vocabulary smaller than the synthetic vocabulary")
        if self.synthetic.max_length > self.model.max_seq_len:
            raise ConfigError("synthetic max_length exceeds model max_seq_len")
        fam = self.loss.get("family", "CE")
        kind = self.loss.get("weight_scheme", "none")
        if fam not in FAMILIES:
            raise ConfigError(f"unknown loss family {fam!r}")
        if kind not in COMPATIBLE[fam]:
            raise ConfigError(f"loss family {fam} cannot use weight scheme {kind!r}")
        self.schedule_spec()  # validates

    def schedule_spec(self) -> ScheduleSpec:
        return ScheduleSpec.from_dict(self.schedule, self.model.d_model)

    def with_loss(self, **changes) -> "ExperimentConfig":
        return replace(self, loss={**self.loss, **changes})

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "loss": dict(self.loss),
            "schedule": self.schedule if isinstance(self.schedule, dict) else {"name": self.schedule},
            "synthetic": self.synthetic.to_dict(),
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "eval_fraction": self.eval_fraction,
            "eval_batch_size": self.eval_batch_size,
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            synthetic = SyntheticSpec.from_dict(d.get("synthetic", {}))
            m = dict(d.get("model", {}))
            m.setdefault("vocab_size", synthetic.vocab_size)
            m.setdefault("n_classes", synthetic.n_classes)
            m.setdefault("max_seq_len", max(64, synthetic.max_length))
            schedule = d.get("schedule", {"name": "v1"})
            if isinstance(schedule, str):
                schedule = {"name": schedule}
            top = {k: d[k] for k in ("batch_size", "epochs", "eval_fraction", "eval_batch_size", "seed", "output_dir") if k in d}
            return cls(
                model=ModelConfig.from_dict(m),
                loss=dict(d.get("loss", {"family": "CE"})),
                schedule=dict(schedule),
                synthetic=synthetic,
                **top,
            )
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid experiment configuration: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"configuration file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return ExperimentConfig.from_dict(raw)


def save_config(config: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    return path


def tiny_experiment(**overrides) -> ExperimentConfig:
    """Desk-scale defaults: 1-layer d_model=8 model, short warmup."""
    d = {
        "model": {"n_layers": 1, "d_model": 8, "d_ff": 32, "heads": 2},
        "loss": {"family": "CE"},
        "schedule": {"name": "v1", "warmup": 200},
        "synthetic": {"ratios": [21.2, 1.9, 1.0], "vocab_size": 120, "n_sequences": 200, "mean_length": 12, "max_length": 40},
        "batch_size": 8,
        "epochs": 50,
        "seed": 0,
    }
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(d.get(k), dict):
            d[k] = {**d[k], **v}
        else:
            d[k] = v
    return ExperimentConfig.from_dict(d)


# Ambiguous-minority data for loss comparisons: single-token spans and a
# fifth of majority tokens borrowed from minority vocabularies, so the
# empirical posterior of every minority token id sits near 0.4.
TREND_SYNTHETIC = {"vocab_size": 60, "decoy": 0.2, "span_mean": 1, "n_sequences": 800}


def trend_experiment(loss: dict, seed: int = 0, **overrides) -> ExperimentConfig:
    """Tiny model on :data:`TREND_SYNTHETIC` data drawn with ``seed``."""
    synthetic = {**TREND_SYNTHETIC, "seed": seed, **overrides.pop("synthetic", {})}
    return tiny_experiment(loss=loss, synthetic=synthetic, seed=seed, **overrides)

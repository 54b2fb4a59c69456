"""Training and evaluation loop, λ sweeps, and schedule export."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .data import Dataset, generate_dataset, iter_batches, split_dataset
from .errors import GenerationError, TrainingAborted
from .metrics import MetricsReport, confusion, report
from .model import Model, build_model
from .objectives import DatasetStats, LossBatch, LossSpec, loss_op, loss_value, sign_boundary
from .optim import AdamState, adam_step
from .schedule import ScheduleSpec

log = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    eval_loss: float
    lrate: float
    seconds: float
    train: MetricsReport
    eval: MetricsReport

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "eval_loss": self.eval_loss,
            "lrate": self.lrate,
            "seconds": self.seconds,
            "train": self.train.to_dict(),
            "eval": self.eval.to_dict(),
        }


@dataclass
class RunRecord:
    config: dict
    epochs: list[EpochRecord] = field(default_factory=list)
    checkpoint: str | None = None
    class_counts: list[int] | None = None

    @property
    def final(self) -> EpochRecord:
        return self.epochs[-1]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "class_counts": self.class_counts,
            "checkpoint": self.checkpoint,
            "epochs": [e.to_dict() for e in self.epochs],
        }


def metrics_header(n_classes: int) -> list[str]:
    return (
        ["epoch", "split", "loss", "micro_f1", "macro_f1", "macro_f2"]
        + [f"pred_count_{c}" for c in range(n_classes)]
        + ["lrate"]
    )


def metrics_row(epoch: int, split: str, loss: float, rep: MetricsReport, lrate: float) -> list:
    return (
        [epoch, split, repr(loss), repr(rep.micro_f1), repr(rep.macro_f1), repr(rep.macro_f2)]
        + [int(n) for n in rep.pred_counts]
        + [repr(lrate)]
    )


def prepare_data(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    data = generate_dataset(config.synthetic)
    return split_dataset(data, config.eval_fraction, config.seed)


def loss_stats(train_set: Dataset) -> DatasetStats:
    counts = train_set.class_counts()
    if counts.min() < 1:
        raise GenerationError(f"training split lacks a class: counts {counts.tolist()}")
    return DatasetStats(tuple(int(c) for c in counts))


def _onehot(ids: np.ndarray, C: int) -> np.ndarray:
    out = np.zeros((ids.size, C))
    out[np.arange(ids.size), ids.reshape(-1)] = 1.0
    return out


def evaluate(model: Model, data: Dataset, spec: LossSpec, batch_size: int = 64):
    """Returns (mean loss, confusion matrix, report) over every real token."""
    C = model.config.n_classes
    cm = np.zeros((C, C), np.int64)
    total_loss = 0.0
    total_tokens = 0
    with ad.no_grad():
        for tok, lab, mask in iter_batches(data, batch_size):
            probs = model(tok, mask).data.reshape(-1, C)
            flat_mask = mask.reshape(-1)
            n = int(flat_mask.sum())
            total_loss += loss_value(spec, LossBatch(_onehot(lab, C), probs, flat_mask)) * n
            total_tokens += n
            cm += confusion(lab, probs.argmax(axis=1), flat_mask, C)
    return total_loss / max(total_tokens, 1), cm, report(cm)


def train(config: ExperimentConfig, write: bool = True, progress: bool = False) -> RunRecord:
    """Train with Adam and the configured schedule, evaluating both splits every epoch.

    With ``write`` the run directory receives ``metrics.csv`` (rows appended
    as epochs finish), ``run.json`` and ``model.ckpt``.
    """
    train_set, eval_set = prepare_data(config)
    stats = loss_stats(train_set)
    spec = LossSpec.from_dict(config.loss, stats)
    sched: ScheduleSpec = config.schedule_spec()
    model = build_model(config.model, config.seed)
    C = config.model.n_classes
    adam = AdamState()
    rng = np.random.default_rng(config.seed + 1)
    record = RunRecord(config=config.to_dict(), class_counts=list(stats.counts))

    out = Path(config.output_dir)
    csv_fh = None
    if write:
        out.mkdir(parents=True, exist_ok=True)
        csv_fh = open(out / "metrics.csv", "w", newline="")
        writer = csv.writer(csv_fh, lineterminator="\n")
        writer.writerow(metrics_header(C))

    step = 0
    lrate = sched(1)
    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            loss_sum, tok_sum = 0.0, 0
            for b, (tok, lab, mask) in enumerate(iter_batches(train_set, config.batch_size, rng), 1):
                step += 1
                lrate = sched(step)
                probs = ad.reshape(model(tok, mask), (-1, C))
                flat_mask = mask.reshape(-1)
                loss = loss_op(spec, probs, _onehot(lab, C), flat_mask)
                value = loss.item()
                if not math.isfinite(value):
                    ad.get_tape().clear()
                    raise TrainingAborted(epoch, b, lrate, spec.family, value)
                ad.backward(loss)
                adam_step(model.params, adam, lrate)
                n = int(flat_mask.sum())
                loss_sum += value * n
                tok_sum += n
            train_loss = loss_sum / tok_sum
            _, _, train_rep = evaluate(model, train_set, spec, config.eval_batch_size)
            eval_loss, _, eval_rep = evaluate(model, eval_set, spec, config.eval_batch_size)
            rec = EpochRecord(epoch, train_loss, eval_loss, lrate, time.perf_counter() - t0, train_rep, eval_rep)
            record.epochs.append(rec)
            if csv_fh:
                writer.writerow(metrics_row(epoch, "train", train_loss, train_rep, lrate))
                writer.writerow(metrics_row(epoch, "eval", eval_loss, eval_rep, lrate))
                csv_fh.flush()
            if progress:
                log.info(
                    "epoch %d loss %.4f eval macro-F1 %.4f macro-F2 %.4f lrate %.3g",
                    epoch, train_loss, eval_rep.macro_f1, eval_rep.macro_f2, lrate,
                )
    finally:
        if csv_fh:
            csv_fh.close()

    if write:
        bad = [k for k, t in model.params.items() if not np.all(np.isfinite(t.data))]
        if bad:
            raise TrainingAborted(config.epochs, 0, lrate, spec.family, float("nan"))
        record.checkpoint = str(save_checkpoint(out / "model.ckpt", model.params))
        (out / "run.json").write_text(json.dumps(record.to_dict(), indent=2) + "\n")
    return record


def fit_batch(model: Model, tokens, labels, mask, spec: LossSpec | None = None, steps: int = 500, lrate: float = 0.01) -> list[float]:
    """Repeated Adam steps on one fixed batch at a constant rate; returns the loss per step."""
    spec = spec or LossSpec("CE")
    C = model.config.n_classes
    onehot = _onehot(np.asarray(labels), C)
    flat_mask = np.asarray(mask, bool).reshape(-1)
    adam = AdamState()
    losses = []
    for _ in range(steps):
        loss = loss_op(spec, ad.reshape(model(tokens, mask), (-1, C)), onehot, flat_mask)
        losses.append(loss.item())
        ad.backward(loss)
        adam_step(model.params, adam, lrate)
    return losses


def evaluate_checkpoint(config: ExperimentConfig, checkpoint) -> tuple[float, MetricsReport]:
    train_set, eval_set = prepare_data(config)
    spec = LossSpec.from_dict(config.loss, loss_stats(train_set))
    model = build_model(config.model, config.seed)
    model.load_state_dict(load_checkpoint(checkpoint))
    loss, _, rep = evaluate(model, eval_set, spec, config.eval_batch_size)
    return loss, rep


SWEEP_HEADER = ["lambda", "micro_f1", "macro_f1", "macro_f2", "sign_boundary"]


def sweep_lambda(config: ExperimentConfig, lambdas, write: bool = True) -> list[dict]:
    """One run per λ with a shared seed; final-epoch eval scores per row."""
    lambdas = [float(x) for x in lambdas]
    if any(x < 1 for x in lambdas):
        raise ValueError(f"lambda values must be >= 1, got {lambdas}")
    rows = []
    base = Path(config.output_dir)
    for lam in lambdas:
        cfg = replace(config.with_loss(**{"lambda": lam}), output_dir=str(base / f"lambda_{lam:g}"))
        rec = train(cfg, write=write)
        ev = rec.final.eval
        rows.append(
            {
                "lambda": lam,
                "micro_f1": ev.micro_f1,
                "macro_f1": ev.macro_f1,
                "macro_f2": ev.macro_f2,
                "sign_boundary": sign_boundary(lam),
            }
        )
    if write:
        base.mkdir(parents=True, exist_ok=True)
        (base / "sweep.csv").write_text(rows_to_csv(SWEEP_HEADER, rows))
    return rows


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def emit_schedule(spec: ScheduleSpec, steps: int) -> str:
    """CSV with one ``step,lrate`` row per optimizer step 1..steps."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    buf = io.StringIO()
    buf.write("step,lrate\n")
    for x in range(1, steps + 1):
        buf.write(f"{x},{spec(x)!r}\n")
    return buf.getvalue()

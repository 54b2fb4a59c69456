"""Token-level confusion matrices and F-score reports."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def confusion(labels, preds, mask=None, n_classes: int | None = None) -> np.ndarray:
    """C x C counts; entry (t, p) is the number of tokens of class t predicted as p."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    if labels.shape != preds.shape:
        raise ValueError(f"labels {labels.shape} and preds {preds.shape} differ in length")
    if mask is not None:
        keep = np.asarray(mask, bool).reshape(-1)
        labels, preds = labels[keep], preds[keep]
    C = n_classes if n_classes is not None else int(max(labels.max(initial=0), preds.max(initial=0))) + 1
    for name, ids in (("label", labels), ("prediction", preds)):
        if ids.size and (ids.min() < 0 or ids.max() >= C):
            raise ValueError(f"{name} id out of range for {C} classes")
    return np.bincount(labels * C + preds, minlength=C * C).reshape(C, C)


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def _fb(p, r, beta):
    b2 = beta * beta
    return _ratio((1 + b2) * p * r, b2 * p + r)


@dataclass
class MetricsReport:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    micro_f1: float
    macro_f1: float
    macro_f2: float
    pred_counts: np.ndarray

    def to_dict(self) -> dict:
        return {
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "f2": self.f2.tolist(),
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "macro_f2": self.macro_f2,
            "pred_counts": self.pred_counts.tolist(),
        }


def report(cm) -> MetricsReport:
    cm = np.asarray(cm)
    tp = np.diag(cm).astype(np.float64)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    p = _ratio(tp, predicted)
    r = _ratio(tp, actual)
    f1 = _fb(p, r, 1.0)
    f2 = _fb(p, r, 2.0)
    # single-label: pooled fp and fn both equal total - trace, so p = r = F1
    total = cm.sum()
    micro = float(tp.sum() / total) if total else 0.0
    return MetricsReport(
        precision=p,
        recall=r,
        f1=f1,
        f2=f2,
        micro_f1=micro,
        macro_f1=float(f1.mean()),
        macro_f2=float(f2.mean()),
        pred_counts=predicted.astype(np.int64),
    )

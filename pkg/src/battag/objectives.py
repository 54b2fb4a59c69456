"""Imbalance-aware loss family with closed-form gradients.

Every family shares one per-token template::

    loss_t = -[ w_pos * (1 - p_c)^g * log p_c
                + sum_{j in S_t} w_neg[j] * p_j^g * log(1 - p_j) ]

where ``c`` is the true class, ``g`` the focal exponent and ``S_t`` the
negative support: empty for CE/FCE/WCE, every other class for the
CECL family, and only the predicted class (when wrong) for PBP/PBPA.
``w_pos`` carries the loss multiplier ``lam``. The batch loss is the mean
over unmasked tokens.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy import optimize

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DegenerateClassError

FAMILIES = ("CE", "FCE", "WCE", "CECL", "WCECL", "CECLA", "PBP", "PBPA")
WEIGHT_KINDS = ("none", "wce-optimal", "standard", "ee", "array")
LOG_BASES = ("natural", "base10")

COMPATIBLE = {
    "CE": ("none",),
    "FCE": ("none",),
    "WCE": ("none", "wce-optimal"),
    "CECL": ("none",),
    "WCECL": ("standard", "ee"),
    "CECLA": ("array",),
    "PBP": ("none", "standard", "ee"),
    "PBPA": ("array",),
}

_POSITIVE_ONLY = {"CE", "FCE", "WCE"}
_PREDICTED_ONLY = {"PBP", "PBPA"}
_ARRAY = {"CECLA", "PBPA"}

EPS_P = 1e-7


@dataclass(frozen=True)
class DatasetStats:
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(n) for n in self.counts)
        object.__setattr__(self, "counts", counts)
        if len(counts) < 2:
            raise ValueError(f"need at least 2 classes, got {len(counts)}")
        if min(counts) < 1:
            raise ValueError(f"every class needs at least one sample: {counts}")

    @property
    def C(self) -> int:
        return len(self.counts)

    @property
    def N(self) -> int:
        return sum(self.counts)

    @classmethod
    def from_labels(cls, labels, n_classes: int) -> "DatasetStats":
        return cls(tuple(np.bincount(np.asarray(labels).reshape(-1), minlength=n_classes)))


@dataclass(frozen=True)
class WeightScheme:
    kind: str
    alpha: np.ndarray
    beta: np.ndarray | None = None
    A: np.ndarray | None = None

    def scaled(self, c: float) -> "WeightScheme":
        """All weights times ``c``; the argmin over p is unchanged."""
        return WeightScheme(
            self.kind,
            self.alpha * c,
            None if self.beta is None else self.beta * c,
            None if self.A is None else self.A * c,
        )


def make_weights(kind: str, stats: DatasetStats, exact: bool = False) -> WeightScheme:
    """Class weights computed from whole-dataset counts.

    With ``exact=True`` the arrays hold :class:`fractions.Fraction` objects.
    """
    if kind not in WEIGHT_KINDS:
        raise ConfigError(f"unknown weight scheme {kind!r}; expected one of {WEIGHT_KINDS}")
    N = Fraction(stats.N)
    Ns = [Fraction(n) for n in stats.counts]
    C = stats.C
    if kind in ("standard", "ee") and any(n == N for n in Ns):
        raise DegenerateClassError(f"a class holds all {stats.N} samples; {kind} weights undefined")

    alpha = beta = A = None
    if kind == "none":
        alpha = [Fraction(1)] * C
    elif kind == "wce-optimal":
        alpha = [N / n for n in Ns]
    elif kind == "standard":
        alpha = [(N - n) / N for n in Ns]
        beta = [n / N for n in Ns]
    elif kind == "ee":
        alpha = [N / n for n in Ns]
        beta = [N / (N - n) for n in Ns]
    else:
        A = [[N / Ns[i] if i == j else N / ((C - 1) * Ns[j]) for j in range(C)] for i in range(C)]
        alpha = [A[i][i] for i in range(C)]

    conv = (lambda v: np.array(v, dtype=object)) if exact else (lambda v: np.array([float(x) for x in np.ravel(v)]).reshape(np.shape(v)))
    return WeightScheme(
        kind,
        conv(alpha),
        None if beta is None else conv(beta),
        None if A is None else conv(A),
    )


@dataclass(frozen=True)
class LossSpec:
    family: str = "CE"
    gamma: float = 0.0
    lam: float = 1.0
    weights: WeightScheme | None = None
    log_base: str = "natural"
    eps_p: float = EPS_P

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown loss family {self.family!r}; expected one of {FAMILIES}")
        kind = self.kind
        if kind not in COMPATIBLE[self.family]:
            raise ConfigError(
                f"loss family {self.family} cannot use weight scheme {kind!r} "
                f"(allowed: {', '.join(COMPATIBLE[self.family])})"
            )
        if self.gamma < 0:
            raise ConfigError(f"focal exponent must be >= 0, got {self.gamma}")
        if self.family == "CE" and self.gamma != 0:
            raise ConfigError("CE has no focal factor; use FCE for gamma > 0")
        if self.lam < 1:
            raise ConfigError(f"loss multiplier lambda must be >= 1, got {self.lam}")
        if self.log_base not in LOG_BASES:
            raise ConfigError(f"log_base must be one of {LOG_BASES}, got {self.log_base!r}")

    @property
    def kind(self) -> str:
        return "none" if self.weights is None else self.weights.kind

    @property
    def log_scale(self) -> float:
        """Divisor turning natural logs into the configured base."""
        return 1.0 if self.log_base == "natural" else math.log(10.0)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "gamma": self.gamma,
            "lambda": self.lam,
            "weight_scheme": self.kind,
            "log_base": self.log_base,
        }

    @classmethod
    def from_dict(cls, d: dict, stats: DatasetStats | None = None) -> "LossSpec":
        kind = d.get("weight_scheme", "none")
        if kind != "none" and stats is None:
            raise ConfigError(f"weight scheme {kind!r} needs dataset statistics")
        weights = None if kind == "none" else make_weights(kind, stats)
        return cls(
            family=d.get("family", "CE"),
            gamma=float(d.get("gamma", 0.0)),
            lam=float(d.get("lambda", 1.0)),
            weights=weights,
            log_base=d.get("log_base", "natural"),
        )


def valid_combinations(gammas=(0, 1), lams=(1, 8, 9, 12, 20)):
    """Every (family, weight kind, gamma, lambda) the loss accepts."""
    for family in FAMILIES:
        for kind in COMPATIBLE[family]:
            for g in gammas:
                if family == "CE" and g != 0:
                    continue
                for lam in lams:
                    yield family, kind, g, lam


@dataclass
class LossBatch:
    labels: np.ndarray  # one-hot [T, C]
    probs: np.ndarray  # row-stochastic [T, C]
    mask: np.ndarray  # bool [T]

    @classmethod
    def create(cls, labels, probs, mask=None) -> "LossBatch":
        labels = np.asarray(labels, dtype=np.float64)
        probs = np.asarray(probs, dtype=np.float64)
        if labels.shape != probs.shape or labels.ndim != 2:
            raise ValueError(f"labels {labels.shape} and probs {probs.shape} must be equal [T, C]")
        mask = np.ones(len(labels), bool) if mask is None else np.asarray(mask, bool)
        live = mask
        if not np.allclose(probs[live].sum(axis=1), 1.0, atol=1e-9, rtol=0):
            raise ValueError("unmasked probability rows must sum to 1")
        lab = labels[live]
        if not (np.all((lab == 0) | (lab == 1)) and np.all(lab.sum(axis=1) == 1)):
            raise ValueError("unmasked label rows must be one-hot")
        return cls(labels, probs, mask)

    @classmethod
    def from_ids(cls, ids, probs, mask=None) -> "LossBatch":
        probs = np.asarray(probs, dtype=np.float64)
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        labels = np.zeros_like(probs)
        labels[np.arange(len(ids)), ids] = 1.0
        return cls.create(labels, probs, mask)


def _token_weights(spec: LossSpec, labels: np.ndarray, probs: np.ndarray, mask: np.ndarray):
    """Per-token positive weight [T] and negative weight matrix [T, C], masks applied."""
    T, C = labels.shape
    true = labels.argmax(axis=1)
    rows = np.arange(T)
    w = spec.weights
    if spec.family in _ARRAY:
        A = np.asarray(w.A, dtype=np.float64)
        wpos = A[true, true]
        wneg = A[:, true].T.copy()  # row t is column true[t] of A
    else:
        alpha = np.ones(C) if w is None else np.asarray(w.alpha, dtype=np.float64)
        beta = np.ones(C) if (w is None or w.beta is None) else np.asarray(w.beta, dtype=np.float64)
        wpos = alpha[true]
        wneg = np.broadcast_to(beta, (T, C)).copy()
    wneg[rows, true] = 0.0
    if spec.family in _POSITIVE_ONLY:
        wneg[:] = 0.0
    elif spec.family in _PREDICTED_ONLY:
        pred = probs.argmax(axis=1)  # first maximum wins ties
        keep = np.zeros_like(wneg)
        keep[rows, pred] = 1.0
        wneg *= keep
    m = mask.astype(np.float64)
    return spec.lam * wpos * m, wneg * m[:, None], true


def loss_value(spec: LossSpec, batch: LossBatch) -> float:
    labels, probs, mask = batch.labels, batch.probs, batch.mask
    n = int(mask.sum())
    if n == 0:
        return 0.0
    wpos, wneg, true = _token_weights(spec, labels, probs, mask)
    p = np.clip(probs, spec.eps_p, 1.0 - spec.eps_p)
    g = spec.gamma
    pc = p[np.arange(len(p)), true]
    pos = wpos * (1.0 - pc) ** g * np.log(pc)
    neg = (wneg * p**g * np.log1p(-p)).sum(axis=1)
    return float(-(pos + neg).sum() / (n * spec.log_scale))


def loss_grad_analytic(spec: LossSpec, batch: LossBatch) -> np.ndarray:
    """d(mean loss)/dp for every token and class, from the closed forms."""
    labels, probs, mask = batch.labels, batch.probs, batch.mask
    grad = np.zeros_like(probs)
    n = int(mask.sum())
    if n == 0:
        return grad
    wpos, wneg, true = _token_weights(spec, labels, probs, mask)
    p = np.clip(probs, spec.eps_p, 1.0 - spec.eps_p)
    g = spec.gamma
    rows = np.arange(len(p))
    pc = p[rows, true]
    pos = g * (1.0 - pc) ** (g - 1.0) * np.log(pc) - (1.0 - pc) ** g / pc
    neg = -g * p ** (g - 1.0) * np.log1p(-p) + p**g / (1.0 - p)
    grad = wneg * neg
    grad[rows, true] += wpos * pos
    inside = (probs >= spec.eps_p) & (probs <= 1.0 - spec.eps_p)
    return grad * inside / (n * spec.log_scale)


def loss_op(spec: LossSpec, probs: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    """Scalar loss node whose backward rule is :func:`loss_grad_analytic`."""
    batch = LossBatch(labels, probs.data, mask)
    value = loss_value(spec, batch)
    return ad.custom((probs,), np.asarray(value), lambda g: (g * loss_grad_analytic(spec, batch),))


def loss_autodiff(spec: LossSpec, probs: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    """The same loss assembled from tape primitives, for cross-checking gradients."""
    n = int(mask.sum())
    wpos, wneg, _ = _token_weights(spec, labels, probs.data, mask)
    p = ad.clip(probs, spec.eps_p, 1.0 - spec.eps_p)
    one_minus = ad.sub(1.0, p)
    pos = ad.mul(labels * wpos[:, None], ad.mul(ad.power(one_minus, spec.gamma), ad.log(p)))
    neg = ad.mul(wneg, ad.mul(ad.power(p, spec.gamma), ad.log(one_minus)))
    total = ad.sum(ad.add(pos, neg))
    return ad.scale(total, -1.0 / (max(n, 1) * spec.log_scale))


# --- aggregated analysis -----------------------------------------------------


def _side_scales(spec: LossSpec, stats: DatasetStats, j: int) -> tuple[float, float]:
    """Positive and negative coefficients of class j in the aggregated loss."""
    N = stats.N
    Nj = stats.counts[j]
    w = spec.weights
    if spec.family in _ARRAY:
        A = np.asarray(w.A, dtype=np.float64)
        pos = A[j, j] * Nj / N
        neg = sum(A[j, i] * stats.counts[i] for i in range(stats.C) if i != j) / N
    else:
        alpha = 1.0 if w is None else float(w.alpha[j])
        beta = 1.0 if (w is None or w.beta is None) else float(w.beta[j])
        pos = alpha * Nj / N
        neg = 0.0 if spec.family in _POSITIVE_ONLY else beta * (N - Nj) / N
    return spec.lam * pos, neg


def aggregated_gradient(
    spec: LossSpec,
    stats: DatasetStats,
    p_plus: float,
    p_minus: float,
    j: int,
    normalize: bool = False,
) -> float:
    """dL/dp_j when every positive sample of class j predicts ``p_plus`` and
    every negative one predicts ``p_minus``.

    ``normalize`` divides out the shared positive scale so that EE, standard
    and array weights all give ``-lam/p + 1/(1-p)`` at gamma=0.

    In ``base10`` mode the log terms are evaluated as log10 while the
    rational terms keep their natural-log form. That is how the published
    closed form is evaluated numerically; it is not the exact derivative of
    the base-10 loss.
    """
    if not (0.0 < p_plus < 1.0 and 0.0 < p_minus < 1.0):
        raise ValueError(f"p_plus and p_minus must lie in (0, 1), got {p_plus}, {p_minus}")
    pos, neg = _side_scales(spec, stats, j)
    if normalize:
        unit = pos / spec.lam
        pos, neg = pos / unit, neg / unit
    lg = math.log10 if spec.log_base == "base10" else math.log
    g = spec.gamma
    tp = -((1.0 - p_plus) ** g) / p_plus
    tn = p_minus**g / (1.0 - p_minus)
    if g != 0:
        tp += g * (1.0 - p_plus) ** (g - 1.0) * lg(p_plus)
        tn -= g * p_minus ** (g - 1.0) * lg(1.0 - p_minus)
    return pos * tp + neg * tn


def sign_boundary(lam: float) -> float:
    """Root of -lam/p + 1/(1-p): the probability where the gamma=0 gradient turns positive."""
    return lam / (1.0 + lam)


def gradient_root(spec: LossSpec, stats: DatasetStats, j: int = 0) -> float:
    """p in (0,1) where the aggregated gradient at p_plus = p_minus = p crosses zero."""
    f = lambda p: aggregated_gradient(spec, stats, p, p, j)
    return optimize.brentq(f, 1e-9, 1.0 - 1e-9, xtol=1e-14)


def wce_optimality_check(stats: DatasetStats, alpha=None) -> np.ndarray:
    """Minimise the aggregated weighted CE over the probability simplex.

    ``alpha`` defaults to the N/N_i weights; pass ``np.ones(C)`` for plain CE.
    """
    C, N = stats.C, stats.N
    counts = np.asarray(stats.counts, dtype=np.float64)
    alpha = N / counts if alpha is None else np.asarray(alpha, dtype=np.float64)
    coef = alpha * counts / N

    def objective(p):
        return -(coef * np.log(p)).sum()

    def jac(p):
        return -coef / p

    with warnings.catch_warnings():
        # SLSQP clips trial points back into the bounds and says so
        warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
        res = optimize.minimize(
            objective,
            np.full(C, 1.0 / C) + np.linspace(-0.1, 0.1, C) / C,
            jac=jac,
            method="SLSQP",
            bounds=[(1e-9, 1.0)] * C,
            constraints=[{"type": "eq", "fun": lambda p: p.sum() - 1.0, "jac": lambda p: np.ones_like(p)}],
            options={"ftol": 1e-15, "maxiter": 500},
        )
    return res.x / res.x.sum()


GradFn = Callable[[LossSpec, LossBatch], np.ndarray]

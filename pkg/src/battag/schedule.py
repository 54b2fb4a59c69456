"""Warmup/decay learning-rate schedules and F-score geometry.

The adjustable schedule is::

    lrate(x) = scale * d_model**-0.5 * min(S**beta * x**-alpha, S**-1.5 * x)

With ``beta = alpha - 1/2`` both branches meet at ``x = S``. ``alpha = 1/2``,
``beta = 0``, ``scale = 1`` is the original inverse-square-root schedule.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .errors import ConfigError

HALF = Fraction(1, 2)


def base_lrate(x: float, d_model: int, warmup: int = 4000) -> float:
    if x < 1:
        raise ValueError(f"step must be >= 1, got {x}")
    return d_model**-0.5 * min(x**-0.5, x * warmup**-1.5)


def solve_beta(alpha, warmup: int = 4000):
    """Warmup exponent that makes the two branches meet at ``x = warmup``.

    Exact when ``alpha`` is a :class:`~fractions.Fraction`. The result does not
    depend on ``warmup``; the argument is kept for symmetry with the schedule.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    return alpha - HALF if isinstance(alpha, (Fraction, int)) else alpha - 0.5


@dataclass(frozen=True)
class ScheduleSpec:
    d_model: int = 128
    warmup: int = 4000
    alpha: Fraction | float = HALF
    beta: Fraction | float | None = None  # None: derived from alpha
    scale: float = 1.0
    name: str | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError(f"schedule alpha must be > 0, got {self.alpha}")
        if self.scale <= 0:
            raise ConfigError(f"schedule multiplier must be > 0, got {self.scale}")
        if self.warmup < 1 or self.d_model < 1:
            raise ConfigError("warmup and d_model must be >= 1")

    @property
    def effective_beta(self):
        return solve_beta(self.alpha, self.warmup) if self.beta is None else self.beta

    def __call__(self, x: float) -> float:
        return adjusted_lrate(self, x)

    def to_dict(self) -> dict:
        if self.name is not None:
            return {"name": self.name, "warmup": self.warmup}
        d = {"alpha": str(self.alpha), "lambda": self.scale, "warmup": self.warmup}
        if self.beta is not None:
            d["beta"] = str(self.beta)
        return d

    @classmethod
    def from_dict(cls, d, d_model: int) -> "ScheduleSpec":
        if isinstance(d, str):
            d = {"name": d}
        warmup = int(d.get("warmup", 4000))
        if "name" in d:
            return named_variant(d["name"], d_model=d_model, warmup=warmup)
        beta = d.get("beta")
        return cls(
            d_model=d_model,
            warmup=warmup,
            alpha=_number(d.get("alpha", "1/2")),
            beta=None if beta is None else _number(beta),
            scale=float(d.get("lambda", 1.0)),
        )


def _number(v):
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, int):
        return Fraction(v)
    return v


def adjusted_lrate(spec: ScheduleSpec, x: float) -> float:
    if x < 1:
        raise ValueError(f"step must be >= 1, got {x}")
    S = spec.warmup
    alpha = float(spec.alpha)
    beta = float(spec.effective_beta)
    decay = S**beta * x**-alpha
    warm = S**-1.5 * x
    return spec.scale * spec.d_model**-0.5 * min(decay, warm)


VARIANT_ALPHAS = {
    "v1": HALF,
    "v2": Fraction(6, 11),
    "v3": Fraction(6, 13),
    "v4": Fraction(7, 15),
    "v5": Fraction(11, 20),
}

_VARIANT = re.compile(r"^(v[1-5])\s*(?:[*x×]\s*([0-9.]+))?$")


def named_variant(name: str, d_model: int = 128, warmup: int = 4000, beta=None) -> ScheduleSpec:
    """``v1``..``v5`` with an optional multiplier suffix such as ``v4*1.001``.

    ``beta`` overrides the derived warmup exponent (e.g. ``Fraction(-1, 22)``
    for v3 as printed in the source tables).
    """
    m = _VARIANT.match(name.strip())
    if not m:
        raise ConfigError(f"unknown schedule variant {name!r}")
    base, mult = m.groups()
    return ScheduleSpec(
        d_model=d_model,
        warmup=warmup,
        alpha=VARIANT_ALPHAS[base],
        beta=beta,
        scale=float(mult) if mult else 1.0,
        name=name.strip(),
    )


@dataclass(frozen=True)
class FScoreGeometry:
    f_beta: float
    f1_minus_f2: float
    level_curve_slope: float


def f_beta(p: float, r: float, beta: float) -> float:
    b2 = beta * beta
    den = b2 * p + r
    return 0.0 if den == 0 else (1 + b2) * p * r / den


def fscore_geometry(p: float, r: float, beta_f: float = 1.0) -> FScoreGeometry:
    """F_beta at (p, r), the closed form of F1 - F2, and dr/dp along the F1 level curve."""
    f1 = f_beta(p, r, 1.0)
    diff = 3 * p * r * (p - r) / ((p + r) * (4 * p + r)) if p + r > 0 else 0.0
    slope = (2 * r - f1) / (f1 - 2 * p)
    return FScoreGeometry(f_beta(p, r, beta_f), diff, slope)

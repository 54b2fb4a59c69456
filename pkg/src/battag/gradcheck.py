"""Central finite-difference checks for primitives, losses and the full model.

Every check returns :class:`CheckResult` rows; ``passed`` compares the
maximum relative error ``max|a - b| / max|b|`` against the row's tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import ModelConfig, build_model
from .objectives import (
    DatasetStats,
    GradFn,
    LossBatch,
    LossSpec,
    loss_autodiff,
    loss_grad_analytic,
    loss_op,
    loss_value,
    make_weights,
    valid_combinations,
)

FD_STEP = 1e-5
PRIMITIVE_TOL = 1e-6
LOSS_TOL = 1e-6
MODEL_TOL = 1e-4

# class counts used to build weight schemes for each class count C
CHECK_COUNTS = {2: (9, 1), 3: (21, 2, 1), 5: (50, 10, 5, 2, 1)}


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_err < self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: max rel err {self.max_rel_err:.3e} (tol {self.tol:g})"


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    scale = max(float(np.max(np.abs(b))) if b.size else 0.0, 1e-300)
    return float(np.max(np.abs(a - b))) / scale if a.size else 0.0


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = FD_STEP, index=None) -> np.ndarray:
    """Central differences of ``f`` w.r.t. the array ``x`` (modified in place and restored)."""
    g = np.zeros_like(x)
    idx = np.ndindex(x.shape) if index is None else index
    for i in idx:
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        g[i] = (up - down) / (2.0 * h)
    return g


# --- primitives ----------------------------------------------------------------


def _primitive_cases(rng: np.random.Generator):
    def t(*shape, positive=False):
        a = rng.uniform(0.2, 1.5, shape) if positive else rng.normal(size=shape)
        return Tensor(a, requires_grad=True)

    ids = rng.integers(0, 5, (2, 3))
    w = rng.normal(size=(2, 3, 4))
    return {
        "add_broadcast": (lambda a, b: ad.add(a, b), [t(3, 4), t(4)]),
        "sub": (lambda a, b: ad.sub(a, b), [t(3, 4), t(3, 1)]),
        "mul_broadcast": (lambda a, b: ad.mul(a, b), [t(2, 3, 4), t(3, 4)]),
        "scale": (lambda a: ad.scale(a, -2.5), [t(3, 4)]),
        "relu": (lambda a: ad.relu(a), [t(3, 4)]),
        "log": (lambda a: ad.log(a), [t(3, 4, positive=True)]),
        "power": (lambda a: ad.power(a, 1.7), [t(3, 4, positive=True)]),
        "sum": (lambda a: ad.sum(a), [t(3, 4)]),
        "reshape": (lambda a: ad.reshape(a, (4, 3)), [t(3, 4)]),
        "swapaxes": (lambda a: ad.swapaxes(a, 1, 2), [t(2, 3, 4)]),
        "concat": (lambda a, b: ad.concat_last_dim([a, b]), [t(2, 3), t(2, 2)]),
        "matmul_batched": (lambda a, b: ad.matmul(a, b), [t(2, 3, 4), t(4, 5)]),
        "softmax_rows": (lambda a: ad.softmax_rows(a), [t(3, 5)]),
        "layer_norm": (lambda a, g, b: ad.layer_norm(a, g, b), [t(3, 6), t(6), t(6)]),
        "conv1d_w1": (lambda a, k: ad.conv1d(a, k, 1), [t(2, 5, 3), t(1, 3, 4)]),
        "conv1d_w3": (lambda a, k: ad.conv1d(a, k, 3), [t(2, 5, 3), t(3, 3, 4)]),
        "embedding": (lambda e: ad.embedding_lookup(e, ids), [t(5, 3)]),
    }, w


def check_primitives(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    cases, _ = _primitive_cases(rng)
    rows = []
    for name, (fn, inputs) in cases.items():
        probe = rng.normal(size=fn(*inputs).shape)
        ad.get_tape().clear()

        def scalar():
            with ad.no_grad():
                return float((fn(*inputs).data * probe).sum())

        out = fn(*inputs)
        for x in inputs:
            x.grad = None
        ad.backward(ad.sum(ad.mul(out, probe)))
        err = max(rel_err(x.grad, numeric_grad(scalar, x.data)) for x in inputs)
        rows.append(CheckResult(f"primitive {name}", err, PRIMITIVE_TOL))
    return rows


# --- losses ----------------------------------------------------------------------


def random_loss_batch(rng: np.random.Generator, C: int, T: int = 6, margin: float = 1e-3) -> LossBatch:
    """Random probabilities kept away from the clamp and from argmax ties."""
    while True:
        probs = rng.dirichlet(np.ones(C), size=T)
        probs = (probs + 0.01) / (1.0 + 0.01 * C)
        top = np.sort(probs, axis=1)
        if np.all(top[:, -1] - top[:, -2] > margin):
            break
    ids = rng.integers(0, C, T)
    mask = np.ones(T, bool)
    mask[rng.integers(0, T)] = False
    return LossBatch.from_ids(ids, probs, mask)


def _spec_for(family, kind, gamma, lam, C, log_base="natural") -> LossSpec:
    stats = DatasetStats(CHECK_COUNTS[C])
    weights = None if kind == "none" else make_weights(kind, stats)
    return LossSpec(family, float(gamma), float(lam), weights, log_base)


def check_losses(
    analytic: GradFn = loss_grad_analytic,
    n_batches: int = 100,
    seed: int = 0,
    gammas=(0, 1),
    lams=(1, 8, 9, 12, 20),
    log_base: str = "natural",
) -> list[CheckResult]:
    """Analytic loss gradient against central differences and against the tape.

    One row per (family, weight scheme, gamma, lambda); batches cycle through
    C = 2, 3, 5.
    """
    rng = np.random.default_rng(seed)
    batches = [random_loss_batch(rng, (2, 3, 5)[b % 3]) for b in range(n_batches)]
    rows = []
    for family, kind, g, lam in valid_combinations(gammas, lams):
        fd_err = tape_err = 0.0
        for batch in batches:
            C = batch.probs.shape[1]
            spec = _spec_for(family, kind, g, lam, C, log_base)
            probs = batch.probs.copy()
            work = LossBatch(batch.labels, probs, batch.mask)
            grad = analytic(spec, work)
            fd = numeric_grad(lambda: loss_value(spec, work), probs)
            fd_err = max(fd_err, rel_err(grad, fd))
            p = Tensor(probs, requires_grad=True)
            ad.backward(loss_autodiff(spec, p, batch.labels, batch.mask))
            tape_err = max(tape_err, rel_err(grad, p.grad))
        tag = f"{family}/{kind}/gamma={g}/lambda={lam}"
        rows.append(CheckResult(f"loss fd {tag}", fd_err, LOSS_TOL))
        rows.append(CheckResult(f"loss tape {tag}", tape_err, LOSS_TOL))
    return rows


# --- full model ----------------------------------------------------------------


def check_model(config: ModelConfig | None = None, seed: int = 0, loss: LossSpec | None = None) -> list[CheckResult]:
    """Whole-network gradient (through the loss node) against central differences.

    Uses a padded two-sequence batch so masking is exercised. Embedding rows
    are checked only for the ids that occur.
    """
    config = config or ModelConfig.tiny(vocab_size=20, n_classes=3)
    loss = loss or LossSpec("CE")
    model = build_model(config, seed)
    rng = np.random.default_rng(seed + 7)
    n = 5
    tokens = rng.integers(1, config.vocab_size, (2, n))
    mask = np.ones((2, n), bool)
    mask[1, 3:] = False
    tokens[~mask] = 0
    C = config.n_classes
    labels = np.eye(C)[rng.integers(0, C, 2 * n)]
    flat_mask = mask.reshape(-1)

    def objective() -> Tensor:
        probs = ad.reshape(model(tokens, mask), (-1, C))
        return loss_op(loss, probs, labels, flat_mask)

    def value() -> float:
        with ad.no_grad():
            return objective().item()

    for t in model.params.values():
        t.grad = None
    ad.backward(objective())
    rows = []
    used = [(int(i), j) for i in np.unique(tokens[mask]) for j in range(config.d_model)]
    for name, t in model.params.items():
        index = used if name == "embedding" else None
        fd = numeric_grad(value, t.data, index=index)
        got = t.grad if t.grad is not None else np.zeros_like(t.data)
        if index is not None:
            sel = tuple(np.array(used).T)
            got, fd = got[sel], fd[sel]
        rows.append(CheckResult(f"model {config.arch} {name}", rel_err(got, fd), MODEL_TOL))
    return rows


def grad_check(
    config: ModelConfig | None = None,
    analytic: GradFn = loss_grad_analytic,
    n_batches: int = 100,
    seed: int = 0,
) -> list[CheckResult]:
    """Primitives, every loss configuration, and the full model."""
    rows = check_primitives(seed)
    rows += check_losses(analytic, n_batches, seed)
    rows += check_model(config, seed)
    return rows

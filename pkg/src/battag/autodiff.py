"""Tape-based reverse-mode automatic differentiation over numpy arrays.

Every primitive records one node on the active tape when any of its inputs
requires a gradient. ``backward`` walks the tape in reverse, accumulating
gradients additively, then clears it.

All data is held as float64. Operations broadcast like numpy; the gradient
of a broadcast operand is summed back to its own shape.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, TokenLookupError

LN_EPS = 1e-5


@dataclass
class _Node:
    out: "Tensor"
    inputs: tuple["Tensor", ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class ComputationTape:
    nodes: list[_Node] = field(default_factory=list)
    enabled: bool = True

    def record(self, node: _Node) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)


_tape = ComputationTape()


def get_tape() -> ComputationTape:
    return _tape


@contextlib.contextmanager
def no_grad():
    """Disable recording, e.g. for evaluation passes."""
    prev = _tape.enabled
    _tape.enabled = False
    try:
        yield
    finally:
        _tape.enabled = prev


class Tensor:
    """Dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    __add__ = lambda self, o: add(self, o)
    __radd__ = lambda self, o: add(o, self)
    __sub__ = lambda self, o: sub(self, o)
    __rsub__ = lambda self, o: sub(o, self)
    __mul__ = lambda self, o: mul(self, o)
    __rmul__ = lambda self, o: mul(o, self)
    __neg__ = lambda self: scale(self, -1.0)
    __matmul__ = lambda self, o: matmul(self, o)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, inputs: Iterable[Tensor], backward) -> Tensor:
    inputs = tuple(inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = False
    if _tape.enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _tape.record(_Node(out, inputs, backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# --- elementwise -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _result(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.data * c, (a,), lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    keep = a.data > 0
    return _result(np.where(keep, a.data, 0.0), (a,), lambda g: (g * keep,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return _result(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _result(np.log(ad), (a,), lambda g: (g / ad,))


def power(a: Tensor, exponent: float) -> Tensor:
    """Elementwise ``a ** exponent`` for a constant exponent."""
    ad = a.data
    k = float(exponent)
    if k == 0.0:
        return _result(np.ones_like(ad), (a,), lambda g: (np.zeros_like(g),))
    return _result(ad**k, (a,), lambda g: (g * k * ad ** (k - 1.0),))


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = a.shape
    return _result(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


# --- shape -----------------------------------------------------------------


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def swapaxes(a: Tensor, i: int, j: int) -> Tensor:
    return _result(np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),))


def concat_last_dim(tensors: Sequence[Tensor]) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise DimensionError(
                f"concat_last_dim: leading shapes differ: {tensors[0].shape} vs {t.shape}"
            )
    widths = [t.shape[-1] for t in tensors]
    cuts = np.cumsum(widths)[:-1]
    return _result(
        np.concatenate([t.data for t in tensors], axis=-1),
        tensors,
        lambda g: tuple(np.split(g, cuts, axis=-1)),
    )


# --- linear algebra --------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes (leading axes broadcast)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _result(ad @ bd, (a, b), backward)


def softmax_rows(t: Tensor) -> Tensor:
    """Softmax along the last axis, stabilised by subtracting the row max."""
    z = t.data - t.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (t,), backward)


def layer_norm(t: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    x = t.data
    d = x.shape[-1]
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gain.data

    def backward(g):
        gx = g * gd
        dx = inv / d * (
            d * gx - gx.sum(axis=-1, keepdims=True) - xhat * (gx * xhat).sum(axis=-1, keepdims=True)
        )
        return dx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape)

    return _result(xhat * gd + bias.data, (t, gain, bias), backward)


def _shift_down(x: np.ndarray) -> np.ndarray:
    # out[i] = x[i-1], zero at i=0 (sequence axis is -2)
    out = np.zeros_like(x)
    out[..., 1:, :] = x[..., :-1, :]
    return out


def _shift_up(x: np.ndarray) -> np.ndarray:
    # out[i] = x[i+1], zero at the last position
    out = np.zeros_like(x)
    out[..., :-1, :] = x[..., 1:, :]
    return out


def conv1d(t: Tensor, kernel: Tensor, width: int) -> Tensor:
    """Convolution along the sequence axis (-2) of ``t``.

    ``kernel`` has shape [width, d_in, d_out]. Width 3 uses one zero pad on
    each side so the sequence length is preserved; tap 0 reads the previous
    position, tap 2 the next one.
    """
    if width not in (1, 3):
        raise ConfigError(f"conv1d: unsupported width {width}; expected 1 or 3")
    if kernel.ndim != 3 or kernel.shape[0] != width or kernel.shape[1] != t.shape[-1]:
        raise DimensionError(
            f"conv1d: kernel {kernel.shape} does not fit input {t.shape} at width {width}"
        )
    x, k = t.data, kernel.data
    if width == 1:
        out = x @ k[0]

        def backward(g):
            gk = np.tensordot(x, g, axes=(tuple(range(x.ndim - 1)), tuple(range(g.ndim - 1))))
            return g @ k[0].T, gk[None]

        return _result(out, (t, kernel), backward)

    prev, nxt = _shift_down(x), _shift_up(x)
    out = prev @ k[0] + x @ k[1] + nxt @ k[2]
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        gx = g @ k[1].T + _shift_up(g @ k[0].T) + _shift_down(g @ k[2].T)
        gk = np.stack([np.tensordot(s, g, axes=(lead, lead)) for s in (prev, x, nxt)])
        return gx, gk

    return _result(out, (t, kernel), backward)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = ids[(ids < 0) | (ids >= vocab)].reshape(-1)[0]
        raise TokenLookupError(f"token id {int(bad)} outside vocabulary of size {vocab}")
    shape = table.shape

    def backward(g):
        gt = np.zeros(shape)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, shape[1]))
        return (gt,)

    return _result(table.data[ids], (table,), backward)


def custom(inputs: Sequence[Tensor], value: np.ndarray, backward) -> Tensor:
    """Record an externally computed value with a hand-written backward rule."""
    return _result(np.asarray(value, dtype=np.float64), tuple(inputs), backward)


# --- backward pass ---------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tensor reachable from ``loss``, then clear the tape."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    tensors: dict[int, Tensor] = {id(loss): loss}
    try:
        for node in reversed(_tape.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            node.out.grad = g
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                    tensors[key] = inp
        # whatever is left was not produced on the tape: leaves accumulate
        for key, g in grads.items():
            leaf = tensors[key]
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
    finally:
        _tape.clear()

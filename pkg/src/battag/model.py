"""BAT encoder, a post-LN Transformer baseline, and the token classifier head.

One BAT layer is two sublayers::

    ATS:   x + MFSA(x')                      x' = LN_pre(x) if pre_ln else x
    MFSA:  LN(MultiHead(x') + relu(conv1(x')) + relu(conv3(x')))
    FFTS:  LN(FFNN(x') + w_res * x)          w_res is a learnable scalar

Parameters live in a flat ``dict[str, Tensor]`` keyed like ``l0.mfsa.w_q``.
Inputs may be a single sequence ``[n]`` or a padded batch ``[B, n]``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError, SequenceLengthError

MASK_BIAS = -1e9


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 4
    d_model: int = 128
    d_ff: int = 512
    heads: int = 4
    d_k: int | None = None
    pre_ln: bool = True
    vocab_size: int = 1000
    n_classes: int = 3
    max_seq_len: int = 512
    arch: str = "bat"

    def __post_init__(self):
        if self.d_k is None:
            if self.d_model % self.heads:
                raise ConfigError(f"d_model={self.d_model} not divisible by heads={self.heads}")
            object.__setattr__(self, "d_k", self.d_model // self.heads)
        if self.d_model != self.heads * self.d_k:
            raise ConfigError(f"d_model ({self.d_model}) must equal heads*d_k ({self.heads}*{self.d_k})")
        if self.n_layers < 1 or self.max_seq_len < 1:
            raise ConfigError("n_layers and max_seq_len must be >= 1")
        if self.n_classes < 2 or self.vocab_size < 1:
            raise ConfigError("need n_classes >= 2 and vocab_size >= 1")
        if self.arch not in ("bat", "transformer"):
            raise ConfigError(f"unknown architecture {self.arch!r}")

    @property
    def d_v(self) -> int:
        return self.d_k

    @classmethod
    def tiny(cls, vocab_size: int, n_classes: int, max_seq_len: int = 64, **kw) -> "ModelConfig":
        base = dict(n_layers=1, d_model=8, d_ff=32, heads=2)
        base.update(kw)
        return cls(vocab_size=vocab_size, n_classes=n_classes, max_seq_len=max_seq_len, **base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every learnable tensor of the model, in initialisation order."""
    d, f, C = config.d_model, config.d_ff, config.n_classes
    shapes: dict[str, tuple[int, ...]] = {"embedding": (config.vocab_size, d)}
    for i in range(config.n_layers):
        p = f"l{i}."
        if config.arch == "bat":
            if config.pre_ln:
                shapes[p + "ats.ln_pre.gain"] = (d,)
                shapes[p + "ats.ln_pre.bias"] = (d,)
            for w in ("w_q", "w_k", "w_v", "w_o"):
                shapes[p + "mfsa." + w] = (d, d)
            shapes[p + "mfsa.conv1"] = (1, d, d)
            shapes[p + "mfsa.conv3"] = (3, d, d)
            shapes[p + "mfsa.ln.gain"] = (d,)
            shapes[p + "mfsa.ln.bias"] = (d,)
            if config.pre_ln:
                shapes[p + "ffts.ln_pre.gain"] = (d,)
                shapes[p + "ffts.ln_pre.bias"] = (d,)
            shapes[p + "ffts.w1"] = (d, f)
            shapes[p + "ffts.b1"] = (f,)
            shapes[p + "ffts.w2"] = (f, d)
            shapes[p + "ffts.b2"] = (d,)
            shapes[p + "ffts.w_res"] = ()
            shapes[p + "ffts.ln.gain"] = (d,)
            shapes[p + "ffts.ln.bias"] = (d,)
        else:
            for w in ("w_q", "w_k", "w_v", "w_o"):
                shapes[p + "attn." + w] = (d, d)
            shapes[p + "attn.ln.gain"] = (d,)
            shapes[p + "attn.ln.bias"] = (d,)
            shapes[p + "ffn.w1"] = (d, f)
            shapes[p + "ffn.b1"] = (f,)
            shapes[p + "ffn.w2"] = (f, d)
            shapes[p + "ffn.b2"] = (d,)
            shapes[p + "ffn.ln.gain"] = (d,)
            shapes[p + "ffn.ln.bias"] = (d,)
    shapes["head.w"] = (d, C)
    shapes["head.b"] = (C,)
    return shapes


def parameter_count(config: ModelConfig, include_embedding: bool = False) -> int:
    return sum(
        math.prod(shape)
        for name, shape in param_shapes(config).items()
        if include_embedding or name != "embedding"
    )


_FAN_IN = {"b1": "w1", "b2": "w2", "b": "w"}


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    shapes = param_shapes(config)
    params: dict[str, Tensor] = {}
    for name, shape in shapes.items():
        leaf = name.rsplit(".", 1)[-1]
        if name == "embedding":
            data = rng.uniform(-0.1, 0.1, shape)
        elif leaf == "gain":
            data = np.ones(shape)
        elif leaf == "bias":
            data = np.zeros(shape)
        elif leaf == "w_res":
            data = np.ones(shape)
        else:
            ref = shapes[name.rsplit(".", 1)[0] + "." + _FAN_IN[leaf]] if leaf in _FAN_IN else shape
            fan_in = math.prod(ref[:-1])
            bound = 1.0 / math.sqrt(fan_in)
            data = rng.uniform(-bound, bound, shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


def positional_encoding(n: int, d: int, max_seq_len: int | None = None) -> np.ndarray:
    """Sinusoidal encoding: even columns sin(pos / 10000^(2i/d)), odd columns cos."""
    if max_seq_len is not None and n > max_seq_len:
        raise SequenceLengthError(f"sequence length {n} exceeds max_seq_len={max_seq_len}")
    pos = np.arange(n)[:, None]
    i2 = np.arange(0, d, 2)
    angle = pos / 10000.0 ** (i2 / d)
    pe = np.zeros((n, d))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d // 2])
    return pe


def layer_params(params: Mapping[str, Tensor], i: int) -> dict[str, Tensor]:
    prefix = f"l{i}."
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def _key_bias(mask: np.ndarray | None, B: int, n: int) -> np.ndarray | None:
    if mask is None:
        return None
    return np.where(mask, 0.0, MASK_BIAS).reshape(B, 1, 1, n)


def multi_head_attention(x: Tensor, w_q, w_k, w_v, w_o, heads: int, key_bias=None) -> Tensor:
    B, n, d = x.shape
    dk = d // heads

    def split(t):
        return ad.swapaxes(ad.reshape(t, (B, n, heads, dk)), 1, 2)  # [B, h, n, dk]

    q, k, v = split(x @ w_q), split(x @ w_k), split(x @ w_v)
    scores = ad.scale(ad.matmul(q, ad.swapaxes(k, -1, -2)), 1.0 / math.sqrt(dk))
    if key_bias is not None:
        scores = ad.add(scores, key_bias)
    ctx = ad.matmul(ad.softmax_rows(scores), v)
    merged = ad.reshape(ad.swapaxes(ctx, 1, 2), (B, n, d))
    return merged @ w_o


def _as_batch(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 2:
        return ad.reshape(x, (1,) + x.shape), True
    if x.ndim != 3:
        raise DimensionError(f"expected [n, d] or [B, n, d] input, got {x.shape}")
    return x, False


def _unbatch(y: Tensor, squeeze: bool) -> Tensor:
    return ad.reshape(y, y.shape[1:]) if squeeze else y


def _conv_input(x: Tensor, mask) -> Tensor:
    # padded positions must read as zeros so batching does not leak into conv taps
    if mask is None:
        return x
    return ad.mul(x, np.asarray(mask, np.float64)[..., None])


def mfsa(x: Tensor, lp: Mapping[str, Tensor], heads: int, mask=None) -> Tensor:
    x, squeeze = _as_batch(x)
    if x.shape[-1] != lp["w_q"].shape[0]:
        raise DimensionError(f"mfsa: input width {x.shape[-1]} != d_model {lp['w_q'].shape[0]}")
    B, n, _ = x.shape
    att = multi_head_attention(x, lp["w_q"], lp["w_k"], lp["w_v"], lp["w_o"], heads, _key_bias(mask, B, n))
    xc = _conv_input(x, mask)
    local = ad.relu(ad.conv1d(xc, lp["conv1"], 1))
    context = ad.relu(ad.conv1d(xc, lp["conv3"], 3))
    out = ad.layer_norm(ad.add(ad.add(att, local), context), lp["ln.gain"], lp["ln.bias"])
    return _unbatch(out, squeeze)


def _sub(lp: Mapping[str, Tensor], prefix: str) -> dict[str, Tensor]:
    return {k[len(prefix):]: v for k, v in lp.items() if k.startswith(prefix)}


def ats_sublayer(x: Tensor, lp: Mapping[str, Tensor], config: ModelConfig, mask=None) -> Tensor:
    branch_in = ad.layer_norm(x, lp["ats.ln_pre.gain"], lp["ats.ln_pre.bias"]) if config.pre_ln else x
    return ad.add(x, mfsa(branch_in, _sub(lp, "mfsa."), config.heads, mask))


def ffts_sublayer(x: Tensor, lp: Mapping[str, Tensor], config: ModelConfig) -> Tensor:
    branch_in = ad.layer_norm(x, lp["ffts.ln_pre.gain"], lp["ffts.ln_pre.bias"]) if config.pre_ln else x
    hidden = ad.relu(ad.add(branch_in @ lp["ffts.w1"], lp["ffts.b1"]))
    ffnn = ad.add(hidden @ lp["ffts.w2"], lp["ffts.b2"])
    return ad.layer_norm(ad.add(ffnn, ad.mul(lp["ffts.w_res"], x)), lp["ffts.ln.gain"], lp["ffts.ln.bias"])


def transformer_layer(x: Tensor, lp: Mapping[str, Tensor], config: ModelConfig, mask=None) -> Tensor:
    B, n, _ = x.shape
    att = multi_head_attention(
        x, lp["attn.w_q"], lp["attn.w_k"], lp["attn.w_v"], lp["attn.w_o"], config.heads, _key_bias(mask, B, n)
    )
    x = ad.layer_norm(ad.add(x, att), lp["attn.ln.gain"], lp["attn.ln.bias"])
    hidden = ad.relu(ad.add(x @ lp["ffn.w1"], lp["ffn.b1"]))
    ffn = ad.add(hidden @ lp["ffn.w2"], lp["ffn.b2"])
    return ad.layer_norm(ad.add(x, ffn), lp["ffn.ln.gain"], lp["ffn.ln.bias"])


class Model:
    """Configuration plus parameters; calling it returns class probabilities."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    def __call__(self, tokens, mask=None) -> Tensor:
        return forward(tokens, self, mask)

    def parameter_count(self, include_embedding: bool = False) -> int:
        return sum(t.size for k, t in self.params.items() if include_embedding or k != "embedding")

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            if k not in state:
                raise KeyError(f"checkpoint lacks parameter {k!r}")
            if state[k].shape != t.shape:
                raise DimensionError(f"{k}: checkpoint shape {state[k].shape} != model shape {t.shape}")
            t.data = np.array(state[k], dtype=np.float64)


def build_bat(config: ModelConfig, seed: int = 0) -> Model:
    config = replace(config, arch="bat")
    return Model(config, init_params(config, seed))


def build_baseline_transformer(config: ModelConfig, seed: int = 0) -> Model:
    config = replace(config, arch="transformer")
    return Model(config, init_params(config, seed))


def build_model(config: ModelConfig, seed: int = 0) -> Model:
    return Model(config, init_params(config, seed))


def encode(tokens, model: Model, mask=None) -> Tensor:
    """Encoder output [B, n, d_model] before the classifier head."""
    cfg, params = model.config, model.params
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim == 1:
        tokens = tokens[None]
        mask = None if mask is None else np.asarray(mask, bool)[None]
    B, n = tokens.shape
    if n > cfg.max_seq_len:
        raise SequenceLengthError(f"sequence length {n} exceeds max_seq_len={cfg.max_seq_len}")
    x = ad.add(ad.embedding_lookup(params["embedding"], tokens), positional_encoding(n, cfg.d_model))
    for i in range(cfg.n_layers):
        lp = layer_params(params, i)
        if cfg.arch == "bat":
            x = ffts_sublayer(ats_sublayer(x, lp, cfg, mask), lp, cfg)
        else:
            x = transformer_layer(x, lp, cfg, mask)
    return x


def forward(tokens, model: Model, mask=None) -> Tensor:
    """Per-token class probabilities: [n, C] for one sequence, [B, n, C] for a batch."""
    single = np.ndim(tokens) == 1
    x = encode(tokens, model, mask)
    logits = ad.add(x @ model.params["head.w"], model.params["head.b"])
    probs = ad.softmax_rows(logits)
    return _unbatch(probs, single)

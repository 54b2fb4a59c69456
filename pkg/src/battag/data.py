"""Synthetic imbalanced token-labelling data.

Vocabulary layout: id 0 is padding, then a shared noise pool, then one
signal pool per class. A fraction ``overlap`` of every class pool is drawn
from a common set, so those ids are ambiguous between classes and only the
surrounding span can disambiguate them.

Labels come in contiguous spans (1 to ``2*span_mean - 1`` tokens). A token
replaced by noise is drawn from the shared pool and labelled with the
majority class. Per-class span totals are fixed up front so realised label
frequencies match the requested ratio up to rounding.

``decoy`` is the fraction of majority-labelled tokens drawn from the
minority pools instead of the majority pool, shared among minority classes
in proportion to their size. Every minority token id then carries its own
class with probability ``1 / (1 + decoy * N_major / N_minor)``, so a
classifier that follows the empirical posterior tends to under-predict the
minority classes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import GenerationError

PAD = 0

EC_ZH_RATIO = (21.2, 1.9, 1.0)
EC_JP_RATIO = (9.57, 1.0, 1.01)


@dataclass(frozen=True)
class SyntheticSpec:
    ratios: tuple[float, ...] = EC_ZH_RATIO
    vocab_size: int = 200
    overlap: float = 0.0
    noise: float = 0.0
    decoy: float = 0.0
    mean_length: float = 12.0
    max_length: int = 48
    n_sequences: int = 200
    span_mean: int = 2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if len(self.ratios) < 2 or min(self.ratios) <= 0:
            raise GenerationError(f"need >= 2 positive class ratios, got {self.ratios}")
        if not 0.0 <= self.overlap < 1.0:
            raise GenerationError(f"overlap must lie in [0, 1), got {self.overlap}")
        if not 0.0 <= self.noise < 1.0:
            raise GenerationError(f"noise must lie in [0, 1), got {self.noise}")
        if not 0.0 <= self.decoy < 1.0:
            raise GenerationError(f"decoy must lie in [0, 1), got {self.decoy}")
        if not 1 <= self.mean_length <= self.max_length:
            raise GenerationError(
                f"mean length {self.mean_length} incompatible with max length {self.max_length}"
            )
        if self.n_sequences < 1 or self.span_mean < 1:
            raise GenerationError("n_sequences and span_mean must be >= 1")
        if self.pool_size < 1:
            raise GenerationError(f"vocab_size {self.vocab_size} too small for {self.n_classes} classes")

    @property
    def n_classes(self) -> int:
        return len(self.ratios)

    @property
    def majority(self) -> int:
        return int(np.argmax(self.ratios))

    @property
    def pool_size(self) -> int:
        return (self.vocab_size - 1) // (self.n_classes + 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ratios"] = list(self.ratios)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


@dataclass
class Dataset:
    tokens: list[np.ndarray]
    labels: list[np.ndarray]
    n_classes: int
    vocab_size: int
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tokens)

    def class_counts(self) -> np.ndarray:
        if not self.labels:
            return np.zeros(self.n_classes, np.int64)
        return np.bincount(np.concatenate(self.labels), minlength=self.n_classes)

    def subset(self, idx) -> "Dataset":
        return Dataset(
            [self.tokens[i] for i in idx], [self.labels[i] for i in idx], self.n_classes, self.vocab_size, self.meta
        )

    def to_jsonl(self) -> str:
        lines = [
            json.dumps({"tokens": t.tolist(), "labels": l.tolist()}, separators=(",", ":"))
            for t, l in zip(self.tokens, self.labels)
        ]
        return "\n".join(lines) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl())
        return path


def _apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Integer split of ``total`` proportional to ``weights`` (largest remainder)."""
    raw = total * weights / weights.sum()
    out = np.floor(raw).astype(np.int64)
    short = total - out.sum()
    order = np.argsort(-(raw - out), kind="stable")
    out[order[:short]] += 1
    return out


def _pools(spec: SyntheticSpec) -> tuple[np.ndarray, list[np.ndarray]]:
    K, C = spec.pool_size, spec.n_classes
    shared = np.arange(1, 1 + K)
    n_common = int(round(spec.overlap * K))
    common = np.arange(1 + K, 1 + K + n_common)
    start = 1 + K + n_common
    own = K - n_common
    pools = []
    for c in range(C):
        pools.append(np.concatenate([common, np.arange(start + c * own, start + (c + 1) * own)]))
    return shared, pools


def generate_dataset(spec: SyntheticSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    C, maj = spec.n_classes, spec.majority

    lengths = np.minimum(rng.poisson(spec.mean_length - 1, spec.n_sequences) + 1, spec.max_length)
    T = int(lengths.sum())

    share = np.asarray(spec.ratios) / sum(spec.ratios)
    target = _apportion(T, share)
    # minority tokens lost to noise become majority labels, so generate extra
    gen = target.astype(np.float64)
    keep = 1.0 - spec.noise
    for c in range(C):
        if c != maj:
            gen[c] = target[c] / keep
    gen = np.round(gen).astype(np.int64)
    gen[maj] = T - (gen.sum() - gen[maj])
    if gen[maj] < 0 or np.any(np.round(gen * keep).astype(np.int64)[np.arange(C) != maj] < 1):
        raise GenerationError(
            f"ratios {spec.ratios} with noise {spec.noise} cannot be realised over {T} tokens"
        )

    spans = []
    for c in range(C):
        left = int(gen[c])
        while left > 0:
            L = min(int(rng.integers(1, 2 * spec.span_mean)), left)
            spans.append((c, L))
            left -= L
    order = rng.permutation(len(spans))
    stream = np.concatenate([np.full(spans[i][1], spans[i][0], np.int64) for i in order])

    shared, pools = _pools(spec)
    tokens = np.empty(T, np.int64)
    labels = stream.copy()
    for c in range(C):
        pos = np.flatnonzero(stream == c)
        n_noise = int(round(spec.noise * len(pos)))
        noisy = rng.choice(pos, size=n_noise, replace=False) if n_noise else np.empty(0, np.int64)
        tokens[pos] = rng.choice(pools[c], size=len(pos))
        if c == maj and spec.decoy > 0:
            minor = [k for k in range(C) if k != maj]
            n_decoy = _apportion(int(round(spec.decoy * len(pos))), target[minor].astype(np.float64))
            picked = rng.permutation(pos)
            start = 0
            for k, m in zip(minor, n_decoy):
                tokens[picked[start : start + m]] = rng.choice(pools[k], size=m)
                start += m
        tokens[noisy] = rng.choice(shared, size=n_noise)
        labels[noisy] = maj

    cuts = np.cumsum(lengths)[:-1]
    return Dataset(
        list(np.split(tokens, cuts)),
        list(np.split(labels, cuts)),
        C,
        spec.vocab_size,
        {"spec": spec.to_dict()},
    )


def dominant_class(labels: np.ndarray, n_classes: int) -> int:
    return int(np.argmax(np.bincount(labels, minlength=n_classes)))


def split_dataset(data: Dataset, eval_fraction: float = 0.2, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Split by sequence, stratified by each sequence's dominant class."""
    rng = np.random.default_rng(seed)
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(data.labels):
        groups.setdefault(dominant_class(lab, data.n_classes), []).append(i)
    train_idx, eval_idx = [], []
    for c in sorted(groups):
        idx = rng.permutation(groups[c])
        n_eval = int(round(eval_fraction * len(idx)))
        eval_idx.extend(idx[:n_eval].tolist())
        train_idx.extend(idx[n_eval:].tolist())
    return data.subset(sorted(train_idx)), data.subset(sorted(eval_idx))


def pad_batch(tokens: list[np.ndarray], labels: list[np.ndarray]):
    """Pad to the longest sequence; returns (tokens, labels, mask) each [B, n]."""
    n = max(len(t) for t in tokens)
    B = len(tokens)
    tok = np.full((B, n), PAD, np.int64)
    lab = np.zeros((B, n), np.int64)
    mask = np.zeros((B, n), bool)
    for i, (t, l) in enumerate(zip(tokens, labels)):
        tok[i, : len(t)] = t
        lab[i, : len(l)] = l
        mask[i, : len(t)] = True
    return tok, lab, mask


def iter_batches(data: Dataset, batch_size: int, rng: np.random.Generator | None = None):
    order = np.arange(len(data)) if rng is None else rng.permutation(len(data))
    for s in range(0, len(order), batch_size):
        idx = order[s : s + batch_size]
        yield pad_batch([data.tokens[i] for i in idx], [data.labels[i] for i in idx])

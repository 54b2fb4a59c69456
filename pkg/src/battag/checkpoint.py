"""Binary checkpoint format.

Layout (little-endian)::

    b"BATCKPT1"
    uint32  record count
    per record:
        uint32  name length, then UTF-8 name bytes
        uint32  ndim, then ndim x uint64 dimension sizes
        float64 values, row-major
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path
from typing import Mapping

import numpy as np

from .autodiff import Tensor

MAGIC = b"BATCKPT1"


def save_checkpoint(path, tensors: Mapping[str, Tensor | np.ndarray]) -> Path:
    """Write named tensors atomically (temp file + rename)."""
    path = Path(path)
    chunks = [MAGIC, struct.pack("<I", len(tensors))]
    for name, t in tensors.items():
        arr = np.array(t.data if isinstance(t, Tensor) else t, dtype="<f8", order="C")  # keeps 0-d shapes
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"refusing to checkpoint non-finite tensor {name!r}")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack(f"<I{arr.ndim}Q", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    (count,) = struct.unpack_from("<I", buf, 8)
    pos = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos : pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
        pos += 8 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        out[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    if pos != len(buf):
        raise ValueError(f"{path}: {len(buf) - pos} trailing bytes")
    return out

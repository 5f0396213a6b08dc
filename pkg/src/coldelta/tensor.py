"""Dense float32 tensor primitives.

Tensors are plain C-contiguous ``numpy.float32`` arrays. Every operation here
checks shapes explicitly and never broadcasts, so a mismatched call fails at
the call site instead of silently producing a wrongly shaped result.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from os import PathLike
from typing import BinaryIO, Sequence

import numpy as np

from .errors import DimensionError, DivisibilityError, FormatError, NumericError, SparseIndexError

DTYPE = np.float32

_GELU_C = np.float32(np.sqrt(2.0 / np.pi))
_GELU_A = np.float32(0.044715)


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a C-contiguous float32 array with every dimension >= 1."""
    t = np.ascontiguousarray(x, dtype=DTYPE)
    if t.ndim == 0:
        t = t.reshape(1)
    if any(s < 1 for s in t.shape):
        raise DimensionError(f"tensor dimensions must be >= 1, got shape {t.shape}")
    return t


@dataclass(frozen=True)
class SoftmaxStats:
    """Row max ``m`` and row exp-sum ``l`` of scaled logits; shape ``[..., rows]``."""

    m: np.ndarray
    l: np.ndarray

    def __post_init__(self):
        if self.m.shape != self.l.shape:
            raise DimensionError(f"m shape {self.m.shape} != l shape {self.l.shape}")
        if not np.all(np.isfinite(self.m)):
            raise NumericError("softmax max must be finite")
        if not np.all(self.l > 0):
            raise NumericError("softmax exp-sum must be positive")


def gemm(a: np.ndarray, b: np.ndarray, transpose_b: bool = False) -> np.ndarray:
    """Matrix product ``a @ b`` (or ``a @ b.T``) over the last two axes.

    Leading (batch) axes must match exactly.
    """
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"gemm needs >= 2-D operands, got {a.shape} and {b.shape}")
    bm = np.swapaxes(b, -1, -2) if transpose_b else b
    if a.shape[-1] != bm.shape[-2] or (b.ndim > 2 and a.shape[:-2] != b.shape[:-2]):
        raise DimensionError(
            f"gemm shape mismatch: a{a.shape} @ b{b.shape}" + (" (transposed)" if transpose_b else "")
        )
    return np.ascontiguousarray(np.matmul(a, bm), dtype=DTYPE)


def softmax_rows(logits: np.ndarray) -> tuple[np.ndarray, SoftmaxStats]:
    x = np.asarray(logits, dtype=DTYPE)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise DimensionError(f"softmax needs a non-empty last axis, got {x.shape}")
    if np.isnan(x).any():
        raise NumericError("NaN in softmax input")
    m = x.max(axis=-1)
    e = np.exp(x - m[..., None])
    l = e.sum(axis=-1, dtype=DTYPE)
    return (e / l[..., None]).astype(DTYPE, copy=False), SoftmaxStats(m=m, l=l)


def gelu(x: np.ndarray) -> np.ndarray:
    """Tanh-approximation GELU."""
    x = np.asarray(x, dtype=DTYPE)
    return (np.float32(0.5) * x * (np.float32(1.0) + np.tanh(_GELU_C * (x + _GELU_A * x * x * x)))).astype(
        DTYPE, copy=False
    )


def layer_norm(x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Parameter-free normalization of the last axis to zero mean, unit variance."""
    x = np.asarray(x, dtype=DTYPE)
    mu = x.mean(axis=-1, keepdims=True, dtype=DTYPE)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True, dtype=DTYPE)
    return ((x - mu) / np.sqrt(var + DTYPE(eps))).astype(DTYPE, copy=False)


def gather_rows(t: np.ndarray, indices: Sequence[int]) -> np.ndarray:
    """Select rows along axis ``-2``; order preserved, duplicates allowed."""
    t = np.asarray(t, dtype=DTYPE)
    if t.ndim < 2:
        raise DimensionError(f"gather_rows needs a >= 2-D tensor, got {t.shape}")
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    rows = t.shape[-2]
    bad = idx[(idx < 0) | (idx >= rows)]
    if bad.size:
        raise SparseIndexError(f"row index {int(bad[0])} out of range [0, {rows})")
    return np.ascontiguousarray(np.take(t, idx, axis=-2))


def chunk_reduce(t: np.ndarray, chunk: int, mode: str = "sum") -> np.ndarray:
    """Reduce groups of ``chunk`` consecutive rows (axis ``-2``) by sum or mean."""
    t = np.asarray(t, dtype=DTYPE)
    if t.ndim < 2:
        raise DimensionError(f"chunk_reduce needs a >= 2-D tensor, got {t.shape}")
    n = t.shape[-2]
    if chunk < 1 or n % chunk:
        raise DivisibilityError(f"row count {n} is not divisible by chunk {chunk}")
    grouped = t.reshape(*t.shape[:-2], n // chunk, chunk, t.shape[-1])
    if mode == "sum":
        return grouped.sum(axis=-2, dtype=DTYPE)
    if mode == "mean":
        return grouped.mean(axis=-2, dtype=DTYPE)
    raise ValueError(f"unknown chunk_reduce mode {mode!r}")


# ---------------------------------------------------------------------------
# "CSDT" binary dump: magic, u8 version, u8 ndim, ndim x u32 dims, f32 payload.
# All integers and floats little-endian.

TENSOR_MAGIC = b"CSDT"
TENSOR_VERSION = 1


def tensor_to_bytes(t: np.ndarray) -> bytes:
    t = as_tensor(t)
    if t.ndim > 255:
        raise FormatError("CSDT supports at most 255 dimensions")
    header = TENSOR_MAGIC + struct.pack("<BB", TENSOR_VERSION, t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape)
    return header + t.astype("<f4", copy=False).tobytes()


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < 6 or buf[:4] != TENSOR_MAGIC:
        raise FormatError("not a CSDT tensor (bad magic)")
    version, ndim = struct.unpack_from("<BB", buf, 4)
    if version != TENSOR_VERSION:
        raise FormatError(f"unsupported CSDT version {version}")
    off = 6 + 4 * ndim
    if len(buf) < off:
        raise FormatError("truncated CSDT header")
    shape = struct.unpack_from(f"<{ndim}I", buf, 6)
    count = int(np.prod(shape)) if ndim else 0
    if len(buf) != off + 4 * count:
        raise FormatError(f"CSDT payload size {len(buf) - off} != {4 * count} bytes for shape {shape}")
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=off)
    return as_tensor(data.reshape(shape))


def dump_tensor(t: np.ndarray, dest: str | PathLike | BinaryIO) -> None:
    payload = tensor_to_bytes(t)
    if hasattr(dest, "write"):
        dest.write(payload)
    else:
        with open(dest, "wb") as fh:
            fh.write(payload)


def load_tensor(src: str | PathLike | BinaryIO) -> np.ndarray:
    if hasattr(src, "read"):
        return tensor_from_bytes(src.read())
    with open(src, "rb") as fh:
        return tensor_from_bytes(fh.read())

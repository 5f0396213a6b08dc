"""Bitpacked sparsity masks, the CSMK mask file, and cache memory accounting.

Bit order is LSB-first: bit ``i`` of byte ``j`` holds element ``8*j + i``.
Trailing pad bits are always zero.
"""

from __future__ import annotations

import math
import struct
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from os import PathLike

import numpy as np

from .errors import FormatError, ParameterError, SparseIndexError
from .indexset import SparseIndexSet


@dataclass(frozen=True)
class BitpackedMask:
    n_bits: int
    words: bytes

    def __post_init__(self):
        if self.n_bits < 0:
            raise ParameterError("n_bits must be >= 0")
        if len(self.words) != (self.n_bits + 7) // 8:
            raise FormatError(f"{len(self.words)} bytes cannot hold exactly {self.n_bits} bits")

    def popcount(self) -> int:
        return int(np.unpackbits(np.frombuffer(self.words, dtype=np.uint8)).sum())

    def __len__(self) -> int:
        return self.n_bits


def pack_mask(bools) -> BitpackedMask:
    arr = np.asarray(bools, dtype=bool).reshape(-1)
    return BitpackedMask(arr.size, np.packbits(arr, bitorder="little").tobytes())


def unpack_mask(m: BitpackedMask) -> list[bool]:
    bits = np.unpackbits(np.frombuffer(m.words, dtype=np.uint8), count=m.n_bits, bitorder="little")
    return bits.astype(bool).tolist()


def index_set_to_mask(idx: SparseIndexSet, n: int) -> dict[tuple[int, ...], BitpackedMask]:
    """One ``n``-bit mask per chunk, keyed by ``(*lead, chunk)``."""
    out = {}
    for pos in np.ndindex(*idx.counts.shape):
        ids = idx.indices[pos][: idx.counts[pos]]
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            bad = ids[(ids < 0) | (ids >= n)][0]
            raise SparseIndexError(f"index {int(bad)} out of range [0, {n})")
        bits = np.zeros(n, dtype=bool)
        bits[ids] = True
        out[pos] = pack_mask(bits)
    return out


# "CSMK" file: magic, u32 n_bits (little-endian), packed bytes.
MASK_MAGIC = b"CSMK"


def mask_to_bytes(m: BitpackedMask) -> bytes:
    return MASK_MAGIC + struct.pack("<I", m.n_bits) + m.words


def mask_from_bytes(buf: bytes) -> BitpackedMask:
    if len(buf) < 8 or buf[:4] != MASK_MAGIC:
        raise FormatError("not a CSMK mask (bad magic)")
    (n_bits,) = struct.unpack_from("<I", buf, 4)
    return BitpackedMask(n_bits, bytes(buf[8:]))


def save_mask(m: BitpackedMask, path: str | PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(mask_to_bytes(m))


def load_mask(path: str | PathLike) -> BitpackedMask:
    with open(path, "rb") as fh:
        return mask_from_bytes(fh.read())


# ---------------------------------------------------------------------------
# memory accounting


@dataclass(frozen=True)
class MemoryConfig:
    """Shapes that drive cache sizes. ``hidden=0`` means MLP layers are not cached."""

    batch: int
    heads: int
    n_tokens: int
    chunk: int
    layers: int
    head_dim: int
    hidden: int = 0
    model_dim: int = 0
    act_bytes: int = 4
    resident_layers: int = 2

    @property
    def n_chunks(self) -> int:
        return math.ceil(self.n_tokens / self.chunk)


PRESETS = {
    # 118k tokens, 24 heads x 128, 60 blocks, bf16 activations; attention-only caching
    "hunyuan-like": MemoryConfig(
        batch=1, heads=24, n_tokens=118_000, chunk=192, layers=60, head_dim=128, act_bytes=2
    ),
    "toy": MemoryConfig(batch=1, heads=1, n_tokens=256, chunk=4, layers=1, head_dim=8),
}


@dataclass
class CacheBytes:
    naive: int
    optimized: int
    ratio: float
    note: str = ""


@dataclass
class MemoryReport:
    masks: CacheBytes
    activations: CacheBytes
    column_sums: CacheBytes
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def memory_report(cfg: MemoryConfig) -> MemoryReport:
    if min(cfg.batch, cfg.heads, cfg.n_tokens, cfg.chunk, cfg.layers, cfg.head_dim, cfg.act_bytes) < 1:
        raise ParameterError(f"invalid memory config {cfg}")
    resident = min(cfg.resident_layers, cfg.layers)
    mask_elems = cfg.batch * cfg.heads * cfg.n_chunks * cfg.n_tokens * cfg.layers
    if cfg.hidden:
        mask_elems += cfg.batch * cfg.n_chunks * cfg.hidden * cfg.layers
    # ratio is bytes per element: 1 byte (bool) vs 1 bit
    masks = CacheBytes(
        naive=mask_elems,
        optimized=(mask_elems + 7) // 8,
        ratio=float(Fraction(mask_elems) / Fraction(mask_elems, 8)),
        note="bool mask vs LSB-first bitpacked mask, all layers",
    )

    per_layer = cfg.batch * cfg.heads * cfg.n_tokens * cfg.head_dim
    if cfg.hidden:
        d = cfg.model_dim or cfg.heads * cfg.head_dim
        per_layer += cfg.batch * cfg.n_tokens * (cfg.hidden + d) + cfg.batch * cfg.n_chunks * cfg.hidden
    per_layer *= cfg.act_bytes
    acts = CacheBytes(
        naive=per_layer * cfg.layers,
        optimized=per_layer * resident,
        ratio=cfg.layers / resident,
        note=f"all layers resident vs {resident} layer(s) resident while the rest are offloaded",
    )

    full = cfg.batch * cfg.heads * cfg.n_tokens * cfg.n_tokens * cfg.act_bytes
    chunked = cfg.batch * cfg.heads * cfg.n_chunks * cfg.n_tokens * cfg.act_bytes
    colsum = CacheBytes(
        naive=full,
        optimized=chunked,
        ratio=full / chunked,
        note="materialized [B,H,N,N] probabilities vs streamed [B,H,N/c,N] chunk sums, one layer",
    )
    return MemoryReport(masks=masks, activations=acts, column_sums=colsum, config=asdict(cfg))

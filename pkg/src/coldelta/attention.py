"""Column-sparse delta attention.

Dense steps run exact attention, compute per-chunk column sums of the
attention matrix, pick the top-k keys per query chunk and store
``o_cache = o_dense - sparse_part``. Sparse steps recompute only the sparse
part over the cached key sets and add it back onto ``o_cache``.

The sparse part of a chunk is a softmax over the *selected* keys only, not a
masked full-row softmax; dense and sparse steps use the same normalization so
``o_cache + sparse_part`` reproduces ``o_dense`` exactly on a stationary input.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import DimensionError, DivisibilityError, ParameterError, StateError
from .indexset import SparseIndexSet, topk_desc
from .tensor import DTYPE, SoftmaxStats, chunk_reduce, gemm, softmax_rows


@dataclass(frozen=True)
class ColumnSumMatrix:
    """Per query chunk, attention mass given to every key: ``[B, H, N/c, N]``."""

    d: np.ndarray
    chunk: int


@dataclass(frozen=True)
class AttentionCache:
    o_cache: np.ndarray
    stats: SoftmaxStats
    index_set: SparseIndexSet
    age: int = 0


def _check_qkv(q, k, v):
    q, k, v = (np.ascontiguousarray(t, dtype=DTYPE) for t in (q, k, v))
    if q.ndim < 3 or q.shape != k.shape or q.shape != v.shape:
        raise DimensionError(f"q, k, v must share a [..., N, E] shape; got {q.shape}, {k.shape}, {v.shape}")
    return q, k, v


def colsum_attn(q, k, v, prev_stats: SoftmaxStats | None, chunk: int):
    """Exact attention plus per-chunk column sums.

    Column sums normalize with ``prev_stats`` (the previous dense step's row
    constants) when given, otherwise with the current ones.
    Returns ``(o, ColumnSumMatrix, stats)``.
    """
    q, k, v = _check_qkv(q, k, v)
    n, e = q.shape[-2:]
    if chunk < 1 or n % chunk:
        raise DivisibilityError(f"sequence length {n} is not divisible by chunk {chunk}")
    logits = gemm(q, k, transpose_b=True) * DTYPE(1.0 / np.sqrt(e))
    probs, stats = softmax_rows(logits)
    o = gemm(probs, v)
    if prev_stats is None:
        p_approx = probs
    else:
        if prev_stats.m.shape != stats.m.shape:
            raise DimensionError(f"prev_stats shape {prev_stats.m.shape} != {stats.m.shape}")
        p_approx = np.exp(logits - prev_stats.m[..., None]) / prev_stats.l[..., None]
    return o, ColumnSumMatrix(chunk_reduce(p_approx, chunk, "sum"), chunk), stats


def select_topk(d: ColumnSumMatrix, k: int) -> SparseIndexSet:
    """Top-``k`` keys per query chunk, ordered by descending mass (ties: lower id)."""
    idx = topk_desc(d.d, k)
    counts = np.full(idx.shape[:-1], k, dtype=np.int64)
    return SparseIndexSet(idx, counts, d.chunk)


def colsparse_delta_attn(q, k, v, idx: SparseIndexSet, o_base, o_scale: float, backend: str | None = None):
    """``o_base + o_scale * softmax(q K_S^T / sqrt(E)) V_S`` with ``S`` per query chunk."""
    q, k, v = _check_qkv(q, k, v)
    o_base = np.ascontiguousarray(o_base, dtype=DTYPE)
    if o_base.shape != q.shape:
        raise DimensionError(f"o_base shape {o_base.shape} != {q.shape}")
    if o_scale not in (1, -1):
        raise ParameterError(f"o_scale must be +1 or -1, got {o_scale}")
    lead, (n, e) = q.shape[:-2], q.shape[-2:]
    if idx.lead_shape != lead or idx.n_chunks * idx.chunk_size != n:
        raise DimensionError(
            f"index set for lead {idx.lead_shape}, {idx.n_chunks} chunks x {idx.chunk_size} "
            f"does not fit q of shape {q.shape}"
        )
    idx.validate(n)
    g = int(np.prod(lead))
    out = kernels.delta_attn(
        q.reshape(g, n, e),
        k.reshape(g, n, e),
        v.reshape(g, n, e),
        idx.indices.reshape(g, idx.n_chunks, idx.k_max),
        idx.counts.reshape(g, idx.n_chunks),
        o_base.reshape(g, n, e),
        o_scale,
        backend=backend,
    )
    return out.reshape(q.shape)


def sparse_part(q, k, v, idx: SparseIndexSet, backend: str | None = None):
    """The subset-normalized attention term alone (delta onto zeros)."""
    q = np.asarray(q, dtype=DTYPE)
    return colsparse_delta_attn(q, k, v, idx, np.zeros_like(q), 1, backend=backend)


def chipmunk_attn(
    q,
    k,
    v,
    cache: AttentionCache | None,
    is_dense_step: bool,
    topk: int,
    chunk: int,
    static_indices: SparseIndexSet | None = None,
    backend: str | None = None,
):
    """One step of cached column-sparse attention. Returns ``(o, cache')``.

    ``static_indices`` replaces the dynamic top-k pattern on dense steps.
    """
    if is_dense_step:
        prev = cache.stats if cache is not None else None
        o, d, stats = colsum_attn(q, k, v, prev, chunk)
        idx = static_indices if static_indices is not None else select_topk(d, topk)
        o_cache = colsparse_delta_attn(q, k, v, idx, o, -1, backend=backend)
        return o, AttentionCache(o_cache=o_cache, stats=stats, index_set=idx, age=0)
    if cache is None:
        raise StateError("sparse attention step before any dense step")
    o = colsparse_delta_attn(q, k, v, cache.index_set, cache.o_cache, 1, backend=backend)
    return o, replace(cache, age=cache.age + 1)

"""Column-sparse delta MLP (two-layer GELU MLP with cross-step caching)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, DivisibilityError, NumericError, StateError
from .indexset import SparseIndexSet, topk_desc
from .tensor import DTYPE, chunk_reduce, gelu, gemm


@dataclass(frozen=True)
class MlpWeights:
    """``w1``, ``w2``: ``[F, D]``; ``b1``: ``[F]``; ``b2``: ``[D]``."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=DTYPE)
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite values in {name}")
            object.__setattr__(self, name, arr)
        f, d = self.w1.shape
        if self.w2.shape != (f, d) or self.b1.shape != (f,) or self.b2.shape != (d,):
            raise DimensionError(
                f"inconsistent MLP weights: w1{self.w1.shape} b1{self.b1.shape} w2{self.w2.shape} b2{self.b2.shape}"
            )

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def dim(self) -> int:
        return self.w1.shape[1]


@dataclass(frozen=True)
class MlpCache:
    t_m: np.ndarray  # [B, N/c, F] chunk-mean of x @ w1^T (bias excluded)
    a_cache: np.ndarray  # [B, N, F]
    m_cache: np.ndarray  # [B, N, D]
    index_set: SparseIndexSet | None = None
    age: int = 0


def _check_x(x, w: MlpWeights):
    x = np.ascontiguousarray(x, dtype=DTYPE)
    if x.ndim != 3 or x.shape[-1] != w.dim:
        raise DimensionError(f"x must be [B, N, {w.dim}], got {x.shape}")
    return x


def mlp_dense(x, w: MlpWeights):
    """Returns ``(o, preact, act)`` where ``preact = x w1^T + b1``."""
    x = _check_x(x, w)
    preact = gemm(x, w.w1, transpose_b=True) + w.b1
    act = gelu(preact)
    o = gemm(act, w.w2) + w.b2
    return o, preact, act


def _tile_mean_preact(x, w1, chunk: int) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=DTYPE)
    n = x.shape[-2]
    if chunk < 1 or n % chunk:
        raise DivisibilityError(f"sequence length {n} is not divisible by chunk {chunk}")
    return gemm(chunk_reduce(x, chunk, "mean"), w1, transpose_b=True)


def compute_mlp_indices(x, w1, t_m_cache, k: int, chunk: int) -> SparseIndexSet:
    """Top-``k`` neurons per token chunk by change of the chunk-mean preactivation."""
    tm = _tile_mean_preact(x, w1, chunk)
    if tm.shape != np.shape(t_m_cache):
        raise DimensionError(f"tile-mean cache shape {np.shape(t_m_cache)} != {tm.shape}")
    idx = topk_desc(np.abs(tm - t_m_cache), k)
    return SparseIndexSet(idx, np.full(idx.shape[:-1], k, dtype=np.int64), chunk)


def colsparse_delta_mlp(x, w: MlpWeights, idx: SparseIndexSet, cache: MlpCache | None, backend: str | None = None):
    """Recompute the selected neurons per chunk and fold their change into the output.

    Returns ``(o, cache')`` with the recomputed activations written into
    ``a_cache`` and ``m_cache`` replaced by ``o``.
    """
    if cache is None:
        raise StateError("sparse MLP step before any dense step")
    x = _check_x(x, w)
    b, n, _ = x.shape
    if cache.m_cache.shape != x.shape or cache.a_cache.shape != (b, n, w.hidden):
        raise DimensionError(f"cache shapes {cache.a_cache.shape}/{cache.m_cache.shape} do not match x {x.shape}")
    if idx.lead_shape != (b,) or idx.n_chunks * idx.chunk_size != n:
        raise DimensionError(f"index set {idx.indices.shape} (chunk {idx.chunk_size}) does not fit x {x.shape}")
    idx.validate(w.hidden)
    o, a_new = kernels.delta_mlp(
        x, w.w1, w.b1, w.w2, idx.indices, idx.counts, cache.a_cache, cache.m_cache, backend=backend
    )
    return o, MlpCache(t_m=cache.t_m, a_cache=a_new, m_cache=o, index_set=idx, age=cache.age + 1)


def chipmunk_mlp(x, w: MlpWeights, cache: MlpCache | None, is_dense_step: bool, topk: int, chunk: int,
                 backend: str | None = None):
    """One step of cached column-sparse MLP. Returns ``(o, cache')``."""
    if is_dense_step:
        o, preact, act = mlp_dense(x, w)
        # chunk_mean(x w1^T) == chunk_mean(x) w1^T; the second form matches the
        # sparse-step computation bit for bit, so an unchanged x gives zero change
        t_m = _tile_mean_preact(x, w.w1, chunk)
        return o, MlpCache(t_m=t_m, a_cache=act, m_cache=o, index_set=None, age=0)
    if cache is None:
        raise StateError("sparse MLP step before any dense step")
    idx = compute_mlp_indices(x, w.w1, cache.t_m, topk, chunk)
    return colsparse_delta_mlp(x, w, idx, cache, backend=backend)

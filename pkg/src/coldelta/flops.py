"""FLOP accounting for dense, sparse-delta and skipped steps.

Only the attention core (QK^T and PV) and the MLP GEMMs are counted; the
Q/K/V/O projections are dense on every computed step and are left out, as
in a kernel-level comparison. A multiply-add counts as 2 FLOPs.

Overheads charged to a dense step that precedes a sparse step:

* attention: column sums ``2*B*H*N^2`` (exp-normalize + add), top-k
  ``B*H*(N/c)*N`` comparisons, cache subtraction ``4*B*H*N*k*E``;
* MLP: tile-mean preactivation ``2*B*(N/c)*D*F``.

Sparse MLP steps additionally pay the index-selection GEMM ``2*B*(N/c)*D*F``.
A layer whose k equals its full width needs no pattern and is costed as dense.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

from .model import ModelConfig
from .schedule import DENSE, SKIPPED, SPARSE, StepSchedule

# Published H100 column-sparse attention kernel speedup over FlashAttention-3
# at 93% sparsity. Quoted for comparison only; nothing here measures it.
REFERENCE_KERNEL_SPEEDUP_93 = 9.3


@dataclass
class FlopReport:
    attn_flops: int
    mlp_flops: int
    actual: int
    dense_equiv: int
    attn_dense_equiv: int
    mlp_dense_equiv: int
    ideal_speedup: float
    attn_speedup: float
    sparse_step_attn_ratio: str  # exact fraction sparse/dense attention FLOPs per sparse step
    sparse_step_attn_speedup: float
    reference_kernel_speedup_93pct: float = REFERENCE_KERNEL_SPEEDUP_93
    reference_note: str = (
        "published H100 kernel measurement at 93% attention sparsity; not measured locally"
    )

    def to_dict(self) -> dict:
        return asdict(self)


def _n_chunks(cfg: ModelConfig) -> int:
    return math.ceil(cfg.n_tokens / cfg.chunk)


def attn_dense_flops(cfg: ModelConfig) -> int:
    n = cfg.n_tokens
    return 4 * cfg.batch * cfg.heads * n * n * cfg.head_dim


def attn_sparse_flops(cfg: ModelConfig, k: int) -> int:
    return 4 * cfg.batch * cfg.heads * cfg.n_tokens * k * cfg.head_dim


def attn_pattern_flops(cfg: ModelConfig, k: int) -> int:
    n, bh = cfg.n_tokens, cfg.batch * cfg.heads
    if k >= n:
        return 0
    return 2 * bh * n * n + bh * _n_chunks(cfg) * n + attn_sparse_flops(cfg, k)


def mlp_dense_flops(cfg: ModelConfig) -> int:
    return 4 * cfg.batch * cfg.n_tokens * cfg.dim * cfg.hidden


def mlp_index_flops(cfg: ModelConfig) -> int:
    return 2 * cfg.batch * _n_chunks(cfg) * cfg.dim * cfg.hidden


def mlp_sparse_flops(cfg: ModelConfig, k: int) -> int:
    if k >= cfg.hidden:
        return mlp_dense_flops(cfg)
    return 4 * cfg.batch * cfg.n_tokens * cfg.dim * k + mlp_index_flops(cfg)


def flop_account(
    cfg: ModelConfig, schedule: StepSchedule, attn_k: int, mlp_k: int, include_mlp: bool = True
) -> FlopReport:
    attn = mlp = 0
    for s, mode in enumerate(schedule.modes):
        if mode == SKIPPED:
            continue
        if mode == DENSE:
            attn += attn_dense_flops(cfg)
            mlp += mlp_dense_flops(cfg)
            if schedule.next_computed(s) == SPARSE:
                attn += attn_pattern_flops(cfg, attn_k)
                mlp += mlp_index_flops(cfg) if mlp_k < cfg.hidden else 0
        else:
            attn += attn_sparse_flops(cfg, attn_k)
            mlp += mlp_sparse_flops(cfg, mlp_k)
    attn *= cfg.layers
    mlp *= cfg.layers
    attn_eq = schedule.total_steps * cfg.layers * attn_dense_flops(cfg)
    mlp_eq = schedule.total_steps * cfg.layers * mlp_dense_flops(cfg)
    if not include_mlp:
        mlp = mlp_eq = 0
    actual, dense_eq = attn + mlp, attn_eq + mlp_eq
    ratio = Fraction(attn_sparse_flops(cfg, attn_k), attn_dense_flops(cfg))
    return FlopReport(
        attn_flops=attn,
        mlp_flops=mlp,
        actual=actual,
        dense_equiv=dense_eq,
        attn_dense_equiv=attn_eq,
        mlp_dense_equiv=mlp_eq,
        ideal_speedup=dense_eq / actual if actual else math.inf,
        attn_speedup=attn_eq / attn if attn else math.inf,
        sparse_step_attn_ratio=str(ratio),
        sparse_step_attn_speedup=float(1 / ratio) if ratio else math.inf,
    )

"""Column-sparse cross-step delta caching for diffusion-transformer layers."""

from .attention import (
    AttentionCache,
    ColumnSumMatrix,
    chipmunk_attn,
    colsparse_delta_attn,
    colsum_attn,
    select_topk,
    sparse_part,
)
from .errors import *  # noqa: F401,F403
from .flops import FlopReport, flop_account
from .harness import RunReport, run_generation
from .indexset import SparseIndexSet, load_pattern, save_pattern
from .kernels import BACKEND
from .masks import BitpackedMask, MemoryConfig, MemoryReport, index_set_to_mask, memory_report, pack_mask, unpack_mask
from .metrics import r_squared
from .mlp import MlpCache, MlpWeights, chipmunk_mlp, colsparse_delta_mlp, compute_mlp_indices, mlp_dense
from .model import ModelConfig, ToyModel, build_toy_model
from .schedule import StepSchedule, resolve_schedule
from .tensor import SoftmaxStats, chunk_reduce, gather_rows, gelu, gemm, load_tensor, dump_tensor, softmax_rows
from .voxel import VoxelLayout, reverse_voxel_order, voxel_order

__version__ = "0.1.0"

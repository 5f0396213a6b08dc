"""A small seeded DiT-style block stack used to drive the caching pipeline.

Each block is ``x += attn(ln(x)); x += mlp(ln(x))`` with multi-head
attention (dense Q/K/V/O projections), a two-layer GELU MLP and a
parameter-free layer norm in front of each sublayer, which keeps the latent
bounded over many steps. There is no conditioning; weights are Gaussian with
std ``1/sqrt(D)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .attention import AttentionCache, chipmunk_attn, colsparse_delta_attn
from .errors import ConfigError
from .indexset import SparseIndexSet
from .metrics import r_squared_or_none
from .mlp import MlpCache, MlpWeights, chipmunk_mlp, colsparse_delta_mlp, mlp_dense
from .tensor import DTYPE, gemm, layer_norm, softmax_rows
from .voxel import VoxelLayout


@dataclass(frozen=True)
class ModelConfig:
    batch: int = 1
    t: int = 2
    h: int = 8
    w: int = 8
    dim: int = 32
    head_dim: int = 8
    heads: int = 4
    hidden: int = 64
    layers: int = 2
    vt: int = 1
    vh: int = 2
    vw: int = 2
    chunk: int = 4
    seed: int = 0

    @property
    def n_tokens(self) -> int:
        return self.t * self.h * self.w

    @property
    def layout(self) -> VoxelLayout:
        return VoxelLayout(self.t, self.h, self.w, self.vt, self.vh, self.vw)

    def validate(self) -> "ModelConfig":
        for name in ("batch", "t", "h", "w", "dim", "head_dim", "heads", "hidden", "chunk"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.layers < 0:
            raise ConfigError(f"layers must be >= 0, got {self.layers}")
        if self.n_tokens % self.chunk:
            raise ConfigError(f"N={self.n_tokens} is not divisible by chunk {self.chunk}")
        if self.chunk != self.vt * self.vh * self.vw:
            raise ConfigError(f"chunk {self.chunk} != voxel volume {self.vt}*{self.vh}*{self.vw}")
        if self.dim != self.heads * self.head_dim:
            raise ConfigError(f"dim {self.dim} != heads {self.heads} * head_dim {self.head_dim}")
        try:
            self.layout
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Block:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    mlp: MlpWeights


@dataclass
class LayerState:
    """Per-block caches plus the previous step's dense inputs/outputs (for R^2)."""

    attn: AttentionCache | None = None
    mlp: MlpCache | None = None
    prev_qkv: tuple | None = None
    prev_attn_dense: np.ndarray | None = None
    prev_h: np.ndarray | None = None
    prev_mlp_dense: np.ndarray | None = None


@dataclass
class StepStats:
    """Per-layer R^2 samples collected on sparse steps.

    ``attn_r2``/``mlp_r2`` score a one-step sparse update from the previous
    step's exact activations (the current index set applied to a fresh
    cache). ``*_cached`` score the output the pipeline actually produced,
    whose cache may be several steps old.
    """

    attn_r2: list[float] = field(default_factory=list)
    mlp_r2: list[float] = field(default_factory=list)
    attn_r2_cached: list[float] = field(default_factory=list)
    mlp_r2_cached: list[float] = field(default_factory=list)


def _record(bucket: list, true_delta, approx_delta) -> None:
    r2 = r_squared_or_none(true_delta, approx_delta)
    if r2 is not None:
        bucket.append(r2)


class ToyModel:
    def __init__(self, cfg: ModelConfig, blocks: list[Block]):
        self.cfg = cfg
        self.blocks = blocks

    # -- head plumbing -----------------------------------------------------

    def _split(self, t: np.ndarray) -> np.ndarray:
        b, n, _ = t.shape
        return np.ascontiguousarray(t.reshape(b, n, self.cfg.heads, self.cfg.head_dim).transpose(0, 2, 1, 3))

    def _merge(self, t: np.ndarray) -> np.ndarray:
        b, h, n, e = t.shape
        return np.ascontiguousarray(t.transpose(0, 2, 1, 3).reshape(b, n, h * e))

    def qkv(self, blk: Block, x: np.ndarray):
        return tuple(self._split(gemm(x, w)) for w in (blk.wq, blk.wk, blk.wv))

    # -- forward passes ----------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Dense forward of the whole stack; ``[B, N, D] -> [B, N, D]``."""
        x = np.array(x, dtype=DTYPE, copy=True)
        for blk in self.blocks:
            q, k, v = self.qkv(blk, layer_norm(x))
            x = x + gemm(self._merge(_dense_attn(q, k, v)), blk.wo)
            x = x + mlp_dense(layer_norm(x), blk.mlp)[0]
        return x

    def forward_cached(
        self,
        x: np.ndarray,
        states: list[LayerState],
        is_dense: bool,
        attn_k: int,
        mlp_k: int,
        static_indices: SparseIndexSet | None = None,
        stats: StepStats | None = None,
        backend: str | None = None,
    ) -> np.ndarray:
        """Forward with cached column-sparse attention and MLP.

        When ``stats`` is given, every sparse step also evaluates the dense
        layer outputs to record how much of the true cross-step change the
        sparse update explains.
        """
        c = self.cfg.chunk
        x = np.array(x, dtype=DTYPE, copy=True)
        for blk, st in zip(self.blocks, states):
            q, k, v = self.qkv(blk, layer_norm(x))
            o, st.attn = chipmunk_attn(q, k, v, st.attn, is_dense, attn_k, c, static_indices, backend=backend)
            if stats is not None:
                ref = o if is_dense else _dense_attn(q, k, v)
                if not is_dense and st.prev_qkv is not None:
                    prev, idx = st.prev_attn_dense, st.attn.index_set
                    base = colsparse_delta_attn(*st.prev_qkv, idx, prev, -1, backend=backend)
                    probe = colsparse_delta_attn(q, k, v, idx, base, 1, backend=backend)
                    _record(stats.attn_r2, ref - prev, probe - prev)
                    _record(stats.attn_r2_cached, ref - prev, o - prev)
                st.prev_qkv, st.prev_attn_dense = (q, k, v), ref
            x = x + gemm(self._merge(o), blk.wo)

            h = layer_norm(x)
            m, st.mlp = chipmunk_mlp(h, blk.mlp, st.mlp, is_dense, mlp_k, c, backend=backend)
            if stats is not None:
                ref = m if is_dense else mlp_dense(h, blk.mlp)[0]
                if not is_dense and st.prev_h is not None:
                    prev = st.prev_mlp_dense
                    _, _, act_prev = mlp_dense(st.prev_h, blk.mlp)
                    fresh = MlpCache(t_m=st.mlp.t_m, a_cache=act_prev, m_cache=prev)
                    probe, _ = colsparse_delta_mlp(h, blk.mlp, st.mlp.index_set, fresh, backend=backend)
                    _record(stats.mlp_r2, ref - prev, probe - prev)
                    _record(stats.mlp_r2_cached, ref - prev, m - prev)
                st.prev_h, st.prev_mlp_dense = h, ref
            x = x + m
        return x

    def new_states(self) -> list[LayerState]:
        return [LayerState() for _ in self.blocks]


def _dense_attn(q, k, v):
    e = q.shape[-1]
    probs, _ = softmax_rows(gemm(q, k, transpose_b=True) * DTYPE(1.0 / np.sqrt(e)))
    return gemm(probs, v)


def build_toy_model(cfg: ModelConfig) -> ToyModel:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    std = 1.0 / np.sqrt(cfg.dim)
    d, f = cfg.dim, cfg.hidden

    def gauss(*shape):
        return (rng.standard_normal(shape) * std).astype(DTYPE)

    blocks = []
    for _ in range(cfg.layers):
        wq, wk, wv, wo = (gauss(d, d) for _ in range(4))
        mlp = MlpWeights(w1=gauss(f, d), b1=gauss(f), w2=gauss(f, d), b2=gauss(d))
        blocks.append(Block(wq, wk, wv, wo, mlp))
    return ToyModel(cfg, blocks)

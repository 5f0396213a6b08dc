"""Multi-step generation driver and run reports."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError
from .flops import flop_account
from .indexset import SparseIndexSet
from .masks import MemoryConfig, memory_report
from .metrics import r_squared_or_none
from .model import ModelConfig, StepStats, ToyModel
from .schedule import DENSE, SKIPPED, StepSchedule
from .tensor import DTYPE
from .voxel import reverse_voxel_order, voxel_order

REPORT_SCHEMA = 1
MODES = ("dense_baseline", "chipmunk")


def k_from_sparsity(width: int, sparsity: float) -> int:
    """Active count for a sparsity fraction, rounded half up, clamped to ``[1, width]``."""
    if not 0.0 <= sparsity < 1.0:
        raise ConfigError(f"sparsity must lie in [0, 1), got {sparsity}")
    return min(width, max(1, math.floor(width * (1.0 - sparsity) + 0.5)))


def initial_latent(cfg: ModelConfig) -> np.ndarray:
    """Seeded ``[B, T, H, W, D]`` Gaussian noise grid."""
    rng = np.random.default_rng([cfg.seed, 1])
    return rng.standard_normal((cfg.batch, cfg.t, cfg.h, cfg.w, cfg.dim)).astype(DTYPE)


def digest(t: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(t, dtype="<f4").tobytes()).hexdigest()


def memory_config_for(cfg: ModelConfig, act_bytes: int = 4, cache_mlp: bool = True) -> MemoryConfig:
    return MemoryConfig(
        batch=cfg.batch,
        heads=cfg.heads,
        n_tokens=cfg.n_tokens,
        chunk=cfg.chunk,
        layers=max(cfg.layers, 1),
        head_dim=cfg.head_dim,
        hidden=cfg.hidden if cache_mlp else 0,
        model_dim=cfg.dim,
        act_bytes=act_bytes,
    )


@dataclass
class RunReport:
    mode: str
    config: dict
    schedule: dict
    sparsity: dict
    step_modes: list[str]
    e2e_r2: float | None
    attn_r2: float | None
    mlp_r2: float | None
    attn_r2_cached: float | None
    mlp_r2_cached: float | None
    per_step: list[dict]
    flops: dict
    memory: dict
    output_digest: str
    baseline_digest: str | None
    backend: str
    schema: int = REPORT_SCHEMA
    report_digest: str = field(default="")

    def to_dict(self) -> dict:
        return asdict(self)

    def seal(self) -> "RunReport":
        body = self.to_dict()
        body.pop("report_digest")
        body.pop("backend")  # kernels are interchangeable; digest covers results only
        self.report_digest = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()
        return self


def _mean(xs):
    return float(np.mean(xs)) if xs else None


def _generate(model: ToyModel, cfg: ModelConfig, schedule: StepSchedule, attn_k: int, mlp_k: int,
              chipmunk: bool, measure: bool, static_indices, backend):
    x0, _ = voxel_order(initial_latent(cfg), cfg.layout)
    latent = x0.copy()
    scale = DTYPE(1.0 / schedule.total_steps)
    states = model.new_states()
    last_out = None
    per_step = []
    for s, mode in enumerate(schedule.modes):
        stats = StepStats() if measure else None
        if not chipmunk:
            out = model.forward(latent)
        elif mode == SKIPPED:
            out = last_out
        else:
            out = model.forward_cached(latent, states, mode == DENSE, attn_k, mlp_k, static_indices, stats, backend)
        latent = latent + scale * out
        last_out = out
        if chipmunk:
            per_step.append(
                {
                    "step": s,
                    "mode": mode,
                    **{
                        key: _mean(getattr(stats, key)) if stats else None
                        for key in ("attn_r2", "mlp_r2", "attn_r2_cached", "mlp_r2_cached")
                    },
                }
            )
    return x0, reverse_voxel_order(latent, cfg.layout), per_step


def run_generation(
    model: ToyModel,
    cfg: ModelConfig,
    schedule: StepSchedule,
    attn_k: int,
    mlp_k: int,
    mode: str = "chipmunk",
    measure: bool = True,
    static_indices: SparseIndexSet | None = None,
    backend: str | None = None,
) -> tuple[RunReport, np.ndarray]:
    """Run ``schedule.total_steps`` steps on a seeded latent.

    Returns the sealed report and the final latent ``[B, T, H, W, D]``.
    In ``chipmunk`` mode a dense baseline is also run to score the result.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    n, f = cfg.n_tokens, cfg.hidden
    if not 1 <= attn_k <= n or not 1 <= mlp_k <= f:
        raise ConfigError(f"attn_k must be in [1, {n}] and mlp_k in [1, {f}]; got {attn_k}, {mlp_k}")

    x0_seq, final, per_step = _generate(
        model, cfg, schedule, attn_k, mlp_k, mode == "chipmunk", measure, static_indices, backend
    )
    init = reverse_voxel_order(x0_seq, cfg.layout)
    e2e = None
    layer_r2 = dict.fromkeys(("attn_r2", "mlp_r2", "attn_r2_cached", "mlp_r2_cached"))
    base_digest = None
    if mode == "chipmunk":
        _, base, _ = _generate(model, cfg, schedule, n, f, False, False, None, backend)
        base_digest = digest(base)
        e2e = r_squared_or_none(base - init, final - init)
        layer_r2 = {
            key: _mean([p[key] for p in per_step if p[key] is not None])
            for key in ("attn_r2", "mlp_r2", "attn_r2_cached", "mlp_r2_cached")
        }
        fl = flop_account(cfg, schedule, attn_k, mlp_k)
    else:
        e2e = 1.0
        fl = flop_account(cfg, schedule, n, f)

    report = RunReport(
        mode=mode,
        config=cfg.to_dict(),
        schedule={
            "total_steps": schedule.total_steps,
            "dense_interval": schedule.dense_interval,
            "use_step_cache": schedule.use_step_cache,
            "window": schedule.window,
            "stride": schedule.stride,
            "step_cache_speedup": schedule.step_cache_speedup,
        },
        sparsity={
            "attn_k": attn_k,
            "mlp_k": mlp_k,
            "attn_sparsity": 1.0 - attn_k / n,
            "mlp_sparsity": 1.0 - mlp_k / f,
        },
        step_modes=list(schedule.modes),
        e2e_r2=e2e,
        attn_r2=layer_r2["attn_r2"],
        mlp_r2=layer_r2["mlp_r2"],
        attn_r2_cached=layer_r2["attn_r2_cached"],
        mlp_r2_cached=layer_r2["mlp_r2_cached"],
        per_step=per_step,
        flops=fl.to_dict(),
        memory=memory_report(memory_config_for(cfg)).to_dict(),
        output_digest=digest(final),
        baseline_digest=base_digest,
        backend=backend or kernels.BACKEND,
    )
    return report.seal(), final


# ---------------------------------------------------------------------------
# flat key=value config files

RUN_KEYS = {
    "steps": int,
    "dense_interval": int,
    "step_cache": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
    "window": int,
    "stride": int,
    "attn_k": int,
    "mlp_k": int,
    "attn_sparsity": float,
    "mlp_sparsity": float,
    "mode": str,
    "out": str,
    "format": str,
}
MODEL_KEYS = {name: int for name in ModelConfig.__dataclass_fields__}
ALIASES = {"b": "batch", "d": "dim", "e": "head_dim", "f": "hidden", "c": "chunk", "h_grid": "h", "w_grid": "w"}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Values are typed."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        key = ALIASES.get(key.lower(), key.lower())
        conv = MODEL_KEYS.get(key) or RUN_KEYS.get(key)
        if conv is None:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = conv(val)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {val!r} for {key}") from None
    return out


def load_config(path) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read())


def split_config(values: dict) -> tuple[ModelConfig, dict]:
    model = {k: v for k, v in values.items() if k in MODEL_KEYS}
    run = {k: v for k, v in values.items() if k not in MODEL_KEYS}
    return ModelConfig(**model), run

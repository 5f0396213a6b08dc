"""Command-line entry point: ``coldelta {run,sweep,bench,dump,verify}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from .errors import ColDeltaError, ConfigError
from .flops import flop_account
from .harness import (
    digest,
    k_from_sparsity,
    load_config,
    memory_config_for,
    run_generation,
    split_config,
)
from .indexset import load_pattern
from .masks import memory_report
from .model import ModelConfig, build_toy_model
from .schedule import resolve_schedule
from .tensor import as_tensor, dump_tensor, load_tensor

PRESETS = {
    # 118k tokens, 24 heads x 128, 60 blocks; attention-only caching in bf16
    "hunyuan-like": (
        ModelConfig(batch=1, t=1, h=118, w=1000, dim=3072, head_dim=128, heads=24, hidden=12288,
                    layers=60, vt=1, vh=1, vw=1, chunk=192),
        {"act_bytes": 2, "cache_mlp": False},
    ),
    "toy": (
        ModelConfig(batch=1, t=1, h=16, w=16, dim=8, head_dim=8, heads=1, hidden=32, layers=1, vh=2, vw=2, chunk=4),
        {"act_bytes": 4, "cache_mlp": True},
    ),
}

MODEL_FLAGS = ("batch", "t", "h", "w", "dim", "head_dim", "heads", "hidden", "layers", "vt", "vh", "vw", "chunk", "seed")


def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    g = p.add_argument_group("model")
    for name in MODEL_FLAGS:
        g.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int, default=None)


def _add_schedule_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("schedule")
    g.add_argument("--steps", type=int, default=None)
    g.add_argument("--dense-interval", type=int, default=None, help="sparse steps per dense step (0 = all dense)")
    g.add_argument("--step-cache", action="store_true", default=None, help="skip steps in the middle window")
    g.add_argument("--window", type=int, default=None)
    g.add_argument("--stride", type=int, default=None)


def _add_sparsity_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("sparsity")
    g.add_argument("--attn-k", type=int, default=None)
    g.add_argument("--mlp-k", type=int, default=None)
    g.add_argument("--attn-sparsity", type=float, default=None)
    g.add_argument("--mlp-sparsity", type=float, default=None)


def _settings(args) -> tuple[ModelConfig, dict]:
    values = load_config(args.config) if getattr(args, "config", None) else {}
    for name in MODEL_FLAGS:
        if getattr(args, name, None) is not None:
            values[name] = getattr(args, name)
    for name in ("steps", "dense_interval", "step_cache", "window", "stride", "attn_k", "mlp_k",
                 "attn_sparsity", "mlp_sparsity", "out", "format"):
        if getattr(args, name, None) is not None:
            values[name] = getattr(args, name)
    return split_config(values)


def _schedule(run: dict):
    return resolve_schedule(
        run.get("steps", 20),
        run.get("dense_interval", 10),
        run.get("step_cache", False),
        run.get("window", 30),
        run.get("stride", 4),
    )


def _resolve_k(width: int, k: int | None, sparsity: float | None) -> int:
    if k is not None:
        return k
    return k_from_sparsity(width, sparsity or 0.0)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    cfg, run = _settings(args)
    model = build_toy_model(cfg)
    attn_k = _resolve_k(cfg.n_tokens, run.get("attn_k"), run.get("attn_sparsity"))
    mlp_k = _resolve_k(cfg.hidden, run.get("mlp_k"), run.get("mlp_sparsity"))
    static = None
    if args.pattern:
        static = load_pattern(args.pattern, (cfg.batch, cfg.heads), cfg.n_tokens // cfg.chunk)
    report, final = run_generation(
        model, cfg, _schedule(run), attn_k, mlp_k, mode=args.mode, static_indices=static, backend=args.backend
    )
    if args.dump_latent:
        dump_tensor(final, args.dump_latent)
    body = report.to_dict()
    if run.get("format", "json") == "csv":
        buf = io.StringIO()
        fields = ["step", "mode", "attn_r2", "mlp_r2", "attn_r2_cached", "mlp_r2_cached"]
        w = csv.DictWriter(buf, fieldnames=fields)
        w.writeheader()
        w.writerows(body["per_step"])
        text = buf.getvalue()
    else:
        text = json.dumps(body, indent=2) + "\n"
    _emit(text, run.get("out"))
    return 0


SWEEP_FIELDS = [
    "target", "k", "sparsity", "attn_k", "mlp_k", "e2e_r2", "attn_r2", "mlp_r2", "ideal_speedup", "attn_speedup",
]


def cmd_sweep(args) -> int:
    cfg, run = _settings(args)
    model = build_toy_model(cfg)
    width = cfg.n_tokens if args.target == "attn" else cfg.hidden
    if args.ks:
        ks = args.ks
    elif args.sparsities:
        ks = [k_from_sparsity(width, s) for s in args.sparsities]
    else:
        ks = sorted({max(1, width // d) for d in (16, 8, 4, 2, 1)})
    schedule = _schedule(run)
    rows = []
    for k in ks:
        if not 1 <= k <= width:
            raise ConfigError(f"k={k} outside [1, {width}]")
        attn_k = k if args.target == "attn" else _resolve_k(cfg.n_tokens, run.get("attn_k"), run.get("attn_sparsity"))
        mlp_k = k if args.target == "mlp" else _resolve_k(cfg.hidden, run.get("mlp_k"), run.get("mlp_sparsity"))
        report, _ = run_generation(model, cfg, schedule, attn_k, mlp_k, backend=args.backend)
        rows.append(
            {
                "target": args.target,
                "k": k,
                "sparsity": 1.0 - k / width,
                "attn_k": attn_k,
                "mlp_k": mlp_k,
                "e2e_r2": report.e2e_r2,
                "attn_r2": report.attn_r2,
                "mlp_r2": report.mlp_r2,
                "ideal_speedup": report.flops["ideal_speedup"],
                "attn_speedup": report.flops["attn_speedup"],
            }
        )
    if run.get("format", "csv") == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=SWEEP_FIELDS)
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue()
    _emit(text, run.get("out"))
    return 0


def cmd_bench(args) -> int:
    if args.preset:
        cfg, mem_opts = PRESETS[args.preset]
        _, run = _settings(args)
    else:
        cfg, run = _settings(args)
        cfg.validate()
        mem_opts = {"act_bytes": 4, "cache_mlp": True}
    run.setdefault("steps", 50)
    schedule = _schedule(run)
    attn_k = _resolve_k(cfg.n_tokens, run.get("attn_k"), run.get("attn_sparsity"))
    mlp_k = _resolve_k(cfg.hidden, run.get("mlp_k"), run.get("mlp_sparsity"))
    fl = flop_account(cfg, schedule, attn_k, mlp_k, include_mlp=mem_opts["cache_mlp"])
    mem = memory_report(memory_config_for(cfg, **mem_opts))
    body = {
        "preset": args.preset,
        "config": cfg.to_dict(),
        "schedule": {"modes": list(schedule.modes), "step_cache_speedup": schedule.step_cache_speedup},
        "sparsity": {"attn_k": attn_k, "mlp_k": mlp_k},
        "flops": fl.to_dict(),
        "memory": mem.to_dict(),
        "mask_memory_ratio": mem.masks.ratio,
    }
    _emit(json.dumps(body, indent=2) + "\n", run.get("out"))
    return 0


def cmd_dump(args) -> int:
    rng = np.random.default_rng(args.seed)
    t = as_tensor(rng.standard_normal(args.shape))
    dump_tensor(t, args.out)
    print(json.dumps({"path": args.out, "shape": list(t.shape), "digest": digest(t)}))
    return 0


def cmd_verify(args) -> int:
    t = load_tensor(args.path)
    info = {"path": args.path, "shape": list(t.shape), "digest": digest(t), "finite": bool(np.isfinite(t).all())}
    ok = info["finite"]
    if args.against:
        other = load_tensor(args.against)
        same_shape = other.shape == t.shape
        err = float(np.max(np.abs(other - t))) if same_shape else None
        info.update(against=args.against, same_shape=same_shape, max_abs_diff=err)
        ok = ok and same_shape and err <= args.atol
    info["ok"] = bool(ok)
    print(json.dumps(info))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coldelta", description=__doc__)
    parser.add_argument("--backend", choices=("cython", "python"), default=None, help="kernel backend override")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one generation; writes a JSON run report")
    _add_model_args(p)
    _add_schedule_args(p)
    _add_sparsity_args(p)
    p.add_argument("--mode", choices=("chipmunk", "dense_baseline"), default="chipmunk")
    p.add_argument("--pattern", help="static sparsity pattern JSON (replaces dynamic top-k)")
    p.add_argument("--dump-latent", help="write the final latent as a CSDT tensor")
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"))
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="R^2 / speedup over a grid of k; writes CSV")
    _add_model_args(p)
    _add_schedule_args(p)
    _add_sparsity_args(p)
    p.add_argument("--target", choices=("attn", "mlp"), default="attn")
    p.add_argument("--ks", type=_int_list)
    p.add_argument("--sparsities", type=_float_list)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="FLOP and memory accounting only")
    _add_model_args(p)
    _add_schedule_args(p)
    _add_sparsity_args(p)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("dump", help="write a seeded random tensor in CSDT format")
    p.add_argument("--shape", type=_int_list, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("verify", help="validate a CSDT file, optionally against another")
    p.add_argument("path")
    p.add_argument("--against")
    p.add_argument("--atol", type=float, default=0.0)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ColDeltaError, OSError, KeyError) as exc:
        print(f"coldelta: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

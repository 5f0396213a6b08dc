"""Time the compiled and numpy delta kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import time

import numpy as np

from coldelta import kernels


def attn_inputs(rng, g, n, e, k, c):
    q, kk, v, base = (rng.standard_normal((g, n, e)).astype(np.float32) for _ in range(4))
    ids = np.stack([[rng.permutation(n)[:k] for _ in range(n // c)] for _ in range(g)]).astype(np.int64)
    return q, kk, v, ids, np.full((g, n // c), k, np.int64), base, 1.0


def mlp_inputs(rng, b, n, d, f, k, c):
    x = rng.standard_normal((b, n, d)).astype(np.float32)
    w1, w2 = ((rng.standard_normal((f, d)) / np.sqrt(d)).astype(np.float32) for _ in range(2))
    b1 = np.zeros(f, np.float32)
    ids = np.stack([[rng.permutation(f)[:k] for _ in range(n // c)] for _ in range(b)]).astype(np.int64)
    a = rng.standard_normal((b, n, f)).astype(np.float32)
    m = rng.standard_normal((b, n, d)).astype(np.float32)
    return x, w1, b1, w2, ids, np.full((b, n // c), k, np.int64), a, m


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    cases = []
    for n, k in ((512, 32), (1024, 72), (2048, 144)):
        cases.append((f"attn G=4 N={n} E=64 k={k}", "delta_attn", attn_inputs(rng, 4, n, 64, k, 8)))
    for n, f, k in ((512, 1024, 64), (1024, 2048, 128)):
        cases.append((f"mlp N={n} D=256 F={f} k={k}", "delta_mlp", mlp_inputs(rng, 1, n, 256, f, k, 8)))

    rows = []
    for label, op, inputs in cases:
        row = {"case": label}
        for name in sorted(kernels.BACKENDS):
            impl = getattr(kernels.get_backend(name), op)
            row[name] = best_of(lambda: impl(*inputs), args.repeat)
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        rows.append(row)
        cols = "  ".join(f"{b}={row[b] * 1e3:8.2f} ms" for b in sorted(kernels.BACKENDS))
        extra = f"  cython/python speedup {row['speedup']:.2f}x" if "speedup" in row else ""
        print(f"{label:32s} {cols}{extra}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()

"""Independent float64 reference implementations used as test oracles.

Written as plain loops so they share no code path with the package.
"""

import math

import numpy as np


def matmul_loop(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def softmax64(row):
    row = [float(x) for x in row]
    mx = max(row)
    ex = [math.exp(x - mx) for x in row]
    tot = sum(ex)
    return [e / tot for e in ex], mx, tot


def gelu64(x):
    return 0.5 * x * (1.0 + math.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def voxel_perm_loops(t, h, w, vt, vh, vw):
    perm = []
    for tc in range(t // vt):
        for hc in range(h // vh):
            for wc in range(w // vw):
                for a in range(vt):
                    for b in range(vh):
                        for c in range(vw):
                            ti, hi, wi = tc * vt + a, hc * vh + b, wc * vw + c
                            perm.append((ti * h + hi) * w + wi)
    return perm


def attention64(q, k, v):
    """Dense softmax(q k^T / sqrt(E)) v for [N, E] float64 inputs."""
    q, k, v = (np.asarray(t, dtype=np.float64) for t in (q, k, v))
    n, e = q.shape
    out = np.zeros_like(q)
    for i in range(n):
        logits = [float(np.dot(q[i], k[j])) / math.sqrt(e) for j in range(n)]
        p, _, _ = softmax64(logits)
        for j in range(n):
            out[i] += p[j] * v[j]
    return out


def colsum64(q, k, chunk, prev_m=None, prev_l=None):
    """Column sums for one head: [N/c, N]."""
    q, k = np.asarray(q, dtype=np.float64), np.asarray(k, dtype=np.float64)
    n, e = q.shape
    d = np.zeros((n // chunk, n))
    for i in range(n):
        logits = [float(np.dot(q[i], k[j])) / math.sqrt(e) for j in range(n)]
        if prev_m is None:
            p, _, _ = softmax64(logits)
        else:
            p = [math.exp(x - float(prev_m[i])) / float(prev_l[i]) for x in logits]
        for j in range(n):
            d[i // chunk, j] += p[j]
    return d


def subset_attention64(q, k, v, ids_per_chunk, chunk):
    """Per query chunk, softmax over only the listed keys; one head."""
    q, k, v = (np.asarray(t, dtype=np.float64) for t in (q, k, v))
    n, e = q.shape
    out = np.zeros_like(q)
    for i in range(n):
        ids = list(ids_per_chunk[i // chunk])
        if not ids:
            continue
        logits = [float(np.dot(q[i], k[j])) / math.sqrt(e) for j in ids]
        p, _, _ = softmax64(logits)
        for pj, j in zip(p, ids):
            out[i] += pj * v[j]
    return out


def topk_sort(row, k):
    """Largest first, lower index first among equal values."""
    order = sorted(range(len(row)), key=lambda j: (-float(row[j]), j))
    return order[:k]


def mlp64(x, w1, b1, w2, b2):
    x, w1, b1, w2, b2 = (np.asarray(t, dtype=np.float64) for t in (x, w1, b1, w2, b2))
    pre = x @ w1.T + b1
    act = np.vectorize(gelu64)(pre)
    return act @ w2 + b2, pre, act


def r2_two_pass(t, a):
    t = [float(x) for x in np.ravel(t)]
    a = [float(x) for x in np.ravel(a)]
    mean = sum(t) / len(t)
    sst = sum((x - mean) ** 2 for x in t)
    sse = sum((x - y) ** 2 for x, y in zip(t, a))
    return 1.0 - sse / sst


def randn(rng, *shape, scale=1.0):
    return (rng.standard_normal(shape) * scale).astype(np.float32)

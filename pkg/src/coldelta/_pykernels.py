"""Pure-numpy column-sparse delta kernels (fallback when the extension is absent).

Chunks with fewer than ``k_max`` active entries are handled by padding the
gather and masking the padded logits / deltas, so every kernel is a handful
of batched numpy calls with no per-chunk Python loop.
"""

from __future__ import annotations

import numpy as np

from .tensor import DTYPE, gelu


def _valid_mask(counts: np.ndarray, k_max: int) -> np.ndarray:
    return np.arange(k_max, dtype=np.int64) < counts[..., None]


def delta_attn(q, k, v, indices, counts, o_base, o_scale):
    """Add ``o_scale * softmax(q K_S^T / sqrt(E)) V_S`` to ``o_base`` per query chunk.

    q, k, v, o_base: ``[G, N, E]``; indices ``[G, nc, k_max]``; counts ``[G, nc]``.
    """
    g, n, e = q.shape
    nc, k_max = indices.shape[1], indices.shape[2]
    out = np.array(o_base, dtype=DTYPE, copy=True)
    if k_max == 0 or not counts.any():
        return out
    c = n // nc
    valid = _valid_mask(counts, k_max)
    safe = np.where(valid, indices, 0)
    rows = np.arange(g)[:, None, None]
    ks = k[rows, safe]  # [G, nc, k_max, E]
    vs = v[rows, safe]
    qs = q.reshape(g, nc, c, e)
    logits = np.matmul(qs, np.swapaxes(ks, -1, -2)) * DTYPE(1.0 / np.sqrt(e))
    logits = np.where(valid[:, :, None, :], logits, -np.inf).astype(DTYPE, copy=False)
    m = logits.max(axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0).astype(DTYPE, copy=False)
    p = np.exp(logits - m)
    l = p.sum(axis=-1, keepdims=True, dtype=DTYPE)
    p = np.divide(p, l, out=np.zeros_like(p), where=l > 0)
    out += DTYPE(o_scale) * np.matmul(p, vs).reshape(g, n, e)
    return out


def delta_mlp(x, w1, b1, w2, indices, counts, a_cache, m_cache):
    """One-pass column-sparse MLP delta.

    Recomputes activations for the selected neurons of each token chunk,
    accumulates ``(a_new - a_cached) @ W2[S]`` into the cached output and
    writes ``a_new`` back into a copy of the activation cache.
    Returns ``(o, a_cache_new)``.
    """
    b, n, d = x.shape
    f = w1.shape[0]
    nc, k_max = indices.shape[1], indices.shape[2]
    o = np.array(m_cache, dtype=DTYPE, copy=True)
    a_new_cache = np.array(a_cache, dtype=DTYPE, copy=True)
    if k_max == 0 or not counts.any():
        return o, a_new_cache
    c = n // nc
    valid = _valid_mask(counts, k_max)
    safe = np.where(valid, indices, 0)
    w1s = w1[safe]  # [B, nc, k_max, D]
    w2s = w2[safe]
    xs = x.reshape(b, nc, c, d)
    pre = np.matmul(xs, np.swapaxes(w1s, -1, -2)) + b1[safe][:, :, None, :]
    a = gelu(pre)  # [B, nc, c, k_max]
    a_chunks = a_new_cache.reshape(b, nc, c, f)
    sel = np.broadcast_to(safe[:, :, None, :], a.shape)
    a_old = np.take_along_axis(a_chunks, sel, axis=-1)
    vmask = np.broadcast_to(valid[:, :, None, :], a.shape)
    delta = np.where(vmask, a - a_old, 0).astype(DTYPE, copy=False)
    o += np.matmul(delta, w2s).reshape(b, n, d)
    bi, ci, ri, ji = np.nonzero(vmask)
    a_chunks[bi, ci, ri, safe[bi, ci, ji]] = a[bi, ci, ri, ji]
    return o, a_new_cache

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled column-sparse delta kernels.

Same contracts as ``coldelta._pykernels``. Inputs are validated by the
Python callers; these loops trust shapes and index ranges.

Per chunk, the selected key/value rows (or neuron weights) are gathered into
contiguous scratch buffers and the two products run as single-precision BLAS
GEMMs; softmax, GELU and the cache scatter stay in C. Unlike the numpy
fallback, nothing of size ``[G, N/c, k_max, E]`` is ever materialized.

BLAS is column-major, so a row-major product ``C = A B`` is issued as
``C^T = B^T A^T`` with the same buffers.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport expf, tanhf, INFINITY
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_blas cimport sgemm

cnp.import_array()

ctypedef cnp.float32_t f32
ctypedef cnp.int64_t i64

cdef f32 GELU_C = <f32>0.7978845608028654
cdef f32 GELU_A = <f32>0.044715


cdef inline f32 _gelu(f32 x) noexcept nogil:
    return <f32>0.5 * x * (<f32>1.0 + tanhf(GELU_C * (x + GELU_A * x * x * x)))


cdef inline void _gather(f32 *dst, const f32 *src, const i64 *ids, Py_ssize_t cnt, Py_ssize_t width) noexcept nogil:
    cdef Py_ssize_t j, e
    cdef const f32 *s
    for j in range(cnt):
        s = src + ids[j] * width
        for e in range(width):
            dst[j * width + e] = s[e]


def delta_attn(const f32[:, :, ::1] q, const f32[:, :, ::1] k, const f32[:, :, ::1] v,
               const i64[:, :, ::1] indices, const i64[:, ::1] counts,
               const f32[:, :, ::1] o_base, double o_scale):
    cdef Py_ssize_t G = q.shape[0], N = q.shape[1], E = q.shape[2]
    cdef Py_ssize_t NC = indices.shape[1], KMAX = indices.shape[2]
    out_arr = np.array(o_base, dtype=np.float32, copy=True)
    cdef f32[:, :, ::1] out = out_arr
    if KMAX == 0:
        return out_arr
    cdef Py_ssize_t C = N // NC
    cdef f32 *p = <f32 *>malloc(C * KMAX * sizeof(f32))  # [C, cnt]
    cdef f32 *ks = <f32 *>malloc(KMAX * E * sizeof(f32))  # [cnt, E]
    cdef f32 *vs = <f32 *>malloc(KMAX * E * sizeof(f32))
    if p == NULL or ks == NULL or vs == NULL:
        free(p); free(ks); free(vs)
        raise MemoryError()
    cdef Py_ssize_t g, i, r, j
    cdef int m, n_, kk, lda, ldb, ldc
    cdef f32 mx, l, alpha, beta
    cdef f32 scale = <f32>(1.0 / np.sqrt(E))
    cdef f32 one = 1
    cdef f32 zero = 0
    cdef f32 osc = <f32>o_scale
    cdef f32 *row
    cdef char tr = b'T'
    cdef char nt = b'N'
    try:
        with nogil:
            for g in range(G):
                for i in range(NC):
                    if counts[g, i] <= 0:
                        continue
                    kk = <int>counts[g, i]
                    _gather(ks, &k[g, 0, 0], &indices[g, i, 0], kk, E)
                    _gather(vs, &v[g, 0, 0], &indices[g, i, 0], kk, E)
                    # logits [C, cnt] = scale * Q_chunk K_S^T
                    m = kk; n_ = <int>C; lda = <int>E; ldb = <int>E; ldc = kk
                    sgemm(&tr, &nt, &m, &n_, &lda, &scale, ks, &lda, <f32 *>&q[g, i * C, 0], &ldb,
                          &zero, p, &ldc)
                    for r in range(C):
                        row = p + r * kk
                        mx = -INFINITY
                        for j in range(kk):
                            if row[j] > mx:
                                mx = row[j]
                        l = 0
                        for j in range(kk):
                            row[j] = expf(row[j] - mx)
                            l = l + row[j]
                        l = osc / l
                        for j in range(kk):
                            row[j] = row[j] * l
                    # out_chunk [C, E] += P V_S
                    m = <int>E; ldb = kk; ldc = <int>E
                    sgemm(&nt, &nt, &m, &n_, &kk, &one, vs, &lda, p, &ldb, &one, &out[g, i * C, 0], &ldc)
    finally:
        free(p)
        free(ks)
        free(vs)
    return out_arr


def delta_mlp(const f32[:, :, ::1] x, const f32[:, ::1] w1, const f32[::1] b1, const f32[:, ::1] w2,
              const i64[:, :, ::1] indices, const i64[:, ::1] counts,
              const f32[:, :, ::1] a_cache, const f32[:, :, ::1] m_cache):
    cdef Py_ssize_t B = x.shape[0], N = x.shape[1], D = x.shape[2], F = w1.shape[0]
    cdef Py_ssize_t NC = indices.shape[1], KMAX = indices.shape[2]
    o_arr = np.array(m_cache, dtype=np.float32, copy=True)
    a_arr = np.array(a_cache, dtype=np.float32, copy=True)
    if KMAX == 0:
        return o_arr, a_arr
    cdef f32[:, :, ::1] o = o_arr
    cdef f32[:, :, ::1] a = a_arr
    cdef Py_ssize_t C = N // NC
    cdef f32 *pre = <f32 *>malloc(C * KMAX * sizeof(f32))  # [C, cnt], becomes the delta
    cdef f32 *w1s = <f32 *>malloc(KMAX * D * sizeof(f32))  # [cnt, D]
    cdef f32 *w2s = <f32 *>malloc(KMAX * D * sizeof(f32))
    if pre == NULL or w1s == NULL or w2s == NULL:
        free(pre); free(w1s); free(w2s)
        raise MemoryError()
    cdef Py_ssize_t b, i, r, j, f
    cdef int m, n_, kk, ld_d, ldk
    cdef f32 act
    cdef f32 one = 1
    cdef f32 zero = 0
    cdef f32 *prow
    cdef f32 *arow
    cdef const i64 *ids
    cdef char tr = b'T'
    cdef char nt = b'N'
    try:
        with nogil:
            for b in range(B):
                for i in range(NC):
                    if counts[b, i] <= 0:
                        continue
                    kk = <int>counts[b, i]
                    ids = &indices[b, i, 0]
                    _gather(w1s, &w1[0, 0], ids, kk, D)
                    _gather(w2s, &w2[0, 0], ids, kk, D)
                    # preact [C, cnt] = X_chunk W1_S^T
                    m = kk; n_ = <int>C; ld_d = <int>D; ldk = kk
                    sgemm(&tr, &nt, &m, &n_, &ld_d, &one, w1s, &ld_d, <f32 *>&x[b, i * C, 0], &ld_d,
                          &zero, pre, &ldk)
                    for r in range(C):
                        prow = pre + r * kk
                        arow = &a[b, i * C + r, 0]
                        for j in range(kk):
                            f = ids[j]
                            act = _gelu(prow[j] + b1[f])
                            prow[j] = act - arow[f]
                            arow[f] = act
                    # out_chunk [C, D] += delta W2_S
                    sgemm(&nt, &nt, &ld_d, &n_, &kk, &one, w2s, &ld_d, pre, &ldk, &one, &o[b, i * C, 0], &ld_d)
    finally:
        free(pre)
        free(w1s)
        free(w2s)
    return o_arr, a_arr

# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: conv2d forward and the DP inner loops.

Mirrors the call surface of ``pyfallback``. Dot products accumulate in
float64; float32 results are produced by a final cast.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"

cdef double INF = float("inf")


def conv2d_forward(cnp.float32_t[:, :, ::1] x,
                   cnp.float32_t[:, :, :, ::1] w,
                   bias,
                   int stride_h, int stride_w,
                   int pad_h, int pad_w):
    cdef int c_in = x.shape[0]
    cdef int h = x.shape[1]
    cdef int wd = x.shape[2]
    cdef int c_out = w.shape[0]
    cdef int kh = w.shape[2]
    cdef int kw = w.shape[3]
    cdef int out_h = (h + 2 * pad_h - kh) // stride_h + 1
    cdef int out_w = (wd + 2 * pad_w - kw) // stride_w + 1

    out_arr = np.empty((c_out, out_h, out_w), dtype=np.float32)
    cdef cnp.float32_t[:, :, ::1] out = out_arr

    cdef cnp.float32_t[::1] bview
    cdef bint has_bias = bias is not None
    if has_bias:
        bview = bias

    cdef int o, oy, ox, c, i, j, iy, ix
    cdef double acc
    with nogil:
        for o in range(c_out):
            for oy in range(out_h):
                for ox in range(out_w):
                    acc = 0.0
                    for c in range(c_in):
                        for i in range(kh):
                            iy = oy * stride_h + i - pad_h
                            if iy < 0 or iy >= h:
                                continue
                            for j in range(kw):
                                ix = ox * stride_w + j - pad_w
                                if ix < 0 or ix >= wd:
                                    continue
                                acc += (<double> x[c, iy, ix]) * (<double> w[o, c, i, j])
                    if has_bias:
                        acc += <double> bview[o]
                    out[o, oy, ox] = <cnp.float32_t> acc
    return out_arr


def dp_relax_row(cnp.float64_t[::1] g_prev,
                 cnp.int64_t[::1] bins,
                 cnp.float64_t[::1] deltas,
                 cnp.int32_t[::1] grid_idx):
    cdef Py_ssize_t n = g_prev.shape[0]
    cdef Py_ssize_t n_choices = bins.shape[0]

    g_arr = np.full(n, INF, dtype=np.float64)
    s_arr = np.full(n, -1, dtype=np.int32)
    cdef cnp.float64_t[::1] g_new = g_arr
    cdef cnp.int32_t[::1] s_new = s_arr

    cdef Py_ssize_t m, b
    cdef long long w, ops = 0
    cdef double cand, delta
    cdef int j
    with nogil:
        for m in range(n_choices):
            w = bins[m]
            if w >= n:
                continue
            delta = deltas[m]
            j = grid_idx[m]
            for b in range(w, n):
                cand = g_prev[b - w] + delta
                if cand < g_new[b]:
                    g_new[b] = cand
                    s_new[b] = j
            ops += n - w
    return g_arr, s_arr, ops


def dp_relax_row_ternary(cnp.float64_t[::1] g_prev,
                         cnp.int64_t[::1] bins,
                         cnp.float64_t[::1] deltas,
                         cnp.int32_t[::1] grid_idx):
    cdef Py_ssize_t n = g_prev.shape[0]
    cdef Py_ssize_t n_choices = bins.shape[0]

    g_arr = np.full(n, INF, dtype=np.float64)
    s_arr = np.full(n, -1, dtype=np.int32)
    cdef cnp.float64_t[::1] g_new = g_arr
    cdef cnp.int32_t[::1] s_new = s_arr

    cdef Py_ssize_t b, lo, hi, m1, m2, m, span
    cdef long long ops = 0
    cdef double f1, f2, f, best
    cdef int best_j
    with nogil:
        for b in range(n):
            # largest choice index whose consumption fits in b (bins ascending)
            lo = 0
            hi = n_choices - 1
            while hi >= 0 and bins[hi] > b:
                hi -= 1
            while hi - lo > 2:
                span = hi - lo
                m1 = lo + span // 3
                m2 = hi - span // 3
                f1 = g_prev[b - bins[m1]] + deltas[m1]
                f2 = g_prev[b - bins[m2]] + deltas[m2]
                ops += 2
                if f1 < f2:
                    hi = m2 - 1
                else:
                    lo = m1 + 1
            best = INF
            best_j = -1
            for m in range(lo, hi + 1):
                f = g_prev[b - bins[m]] + deltas[m]
                ops += 1
                if f < best:
                    best = f
                    best_j = grid_idx[m]
            g_new[b] = best
            s_new[b] = best_j
    return g_arr, s_arr, ops

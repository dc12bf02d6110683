"""Pure-Python (numpy) implementations of the hot kernels.

Same call surface as the compiled module ``_fast``; selected at import time
by :mod:`rdprune._kernels` when the extension is unavailable or when
``RDPRUNE_KERNELS=python`` is set. Dot products accumulate in float64 and
results are cast back to float32, matching the compiled kernels.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "python"

_INF = np.float64(np.inf)


def conv2d_forward(x, w, bias, stride_h, stride_w, pad_h, pad_w):
    """2-D convolution (cross-correlation) of one sample.

    x: (C, H, W) float32; w: (O, C, kH, kW) float32; bias: (O,) float32 or None.
    Returns (O, outH, outW) float32.
    """
    c, h, wd = x.shape
    o, _, kh, kw = w.shape
    hp, wp = h + 2 * pad_h, wd + 2 * pad_w
    if pad_h or pad_w:
        xp = np.zeros((c, hp, wp), dtype=np.float32)
        xp[:, pad_h:pad_h + h, pad_w:pad_w + wd] = x
    else:
        xp = x
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride_h, ::stride_w]
    out_h, out_w = win.shape[1], win.shape[2]
    patches = win.transpose(1, 2, 0, 3, 4).reshape(out_h * out_w, c * kh * kw)
    wm = w.reshape(o, c * kh * kw)
    acc = patches.astype(np.float64) @ wm.astype(np.float64).T
    if bias is not None:
        acc += bias.astype(np.float64)
    return acc.T.reshape(o, out_h, out_w).astype(np.float32)


def dp_relax_row(g_prev, bins, deltas, grid_idx):
    """One layer of the allocation DP over exact bin consumption.

    g_prev: float64[B+1] minimal distortion over the previous layers.
    bins/deltas/grid_idx: per valid curve point, ordered by ascending pruned
    count so that strict-less updates implement the smallest-count tie rule.

    Returns (g_new, s_new, ops) where s_new holds the chosen grid index
    (-1 = unreachable) and ops counts elementary relaxations.
    """
    n = g_prev.shape[0]
    g_new = np.full(n, _INF, dtype=np.float64)
    s_new = np.full(n, -1, dtype=np.int32)
    ops = 0
    for m in range(bins.shape[0]):
        w = int(bins[m])
        if w >= n:
            continue
        cand = g_prev[: n - w] + deltas[m]
        upd = cand < g_new[w:]
        g_new[w:][upd] = cand[upd]
        s_new[w:][upd] = grid_idx[m]
        ops += n - w
    return g_new, s_new, ops


def dp_relax_row_ternary(g_prev, bins, deltas, grid_idx):
    """Ternary-search variant of :func:`dp_relax_row`.

    Assumes the inner objective f(m) = g_prev[b - bins[m]] + deltas[m] is
    strictly unimodal in m for every cell b; narrows to <= 3 candidates and
    finishes with an exact scan (smallest-count tie rule preserved).
    """
    n = g_prev.shape[0]
    b_arr = np.arange(n)
    # bins is ascending; only choices that fit in b are candidates
    hi = np.searchsorted(bins, b_arr, side="right") - 1
    lo = np.zeros(n, dtype=np.int64)
    ops = 0
    while True:
        span = hi - lo
        active = span > 2
        n_active = int(active.sum())
        if n_active == 0:
            break
        m1 = lo + span // 3
        m2 = hi - span // 3
        f1 = g_prev[b_arr - bins[m1]] + deltas[m1]
        f2 = g_prev[b_arr - bins[m2]] + deltas[m2]
        ops += 2 * n_active
        left = f1 < f2
        hi = np.where(active & left, m2 - 1, hi)
        lo = np.where(active & ~left, m1 + 1, lo)
    g_new = np.full(n, _INF, dtype=np.float64)
    s_new = np.full(n, -1, dtype=np.int32)
    for off in range(3):
        m = lo + off
        live = m <= hi
        if not live.any():
            break
        mc = np.where(live, m, 0)
        f = g_prev[b_arr - bins[mc]] + deltas[mc]
        upd = live & (f < g_new)
        g_new[upd] = f[upd]
        s_new[upd] = grid_idx[mc[upd]]
        ops += int(live.sum())
    return g_new, s_new, ops

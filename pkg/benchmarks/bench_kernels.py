"""Timing comparison: compiled kernels vs the numpy fallback.

Runs the convolution and DP row kernels through both backends on
representative shapes, checks they agree, and prints per-kernel timings.

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from rdprune._kernels import pyfallback

try:
    from rdprune._kernels import _fast
except ImportError:
    _fast = None


def best_of(fn, args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def conv_case(rng):
    x = rng.standard_normal((8, 32, 32), dtype=np.float32)
    w = rng.standard_normal((16, 8, 3, 3), dtype=np.float32)
    b = rng.standard_normal(16, dtype=np.float32)
    return (x, w, b, 1, 1, 1, 1)


def dp_case(rng, n_cells=20001, n_choices=101):
    g_prev = np.cumsum(rng.random(n_cells)).astype(np.float64)
    g_prev[rng.random(n_cells) < 0.05] = np.inf
    g_prev[0] = 0.0
    bins = np.sort(rng.integers(0, n_cells // 4, size=n_choices)).astype(np.int64)
    bins[0] = 0
    deltas = np.cumsum(rng.random(n_choices)).astype(np.float64)
    deltas[0] = 0.0
    grid_idx = np.arange(n_choices, dtype=np.int32)
    return (g_prev, bins, deltas, grid_idx)


def report(name, py_time, fast_time):
    if fast_time is None:
        print(f"{name:22s} python {py_time * 1e3:9.3f} ms   compiled (not built)")
    else:
        print(f"{name:22s} python {py_time * 1e3:9.3f} ms   compiled {fast_time * 1e3:9.3f} ms"
              f"   speedup {py_time / fast_time:6.2f}x")


def main():
    rng = np.random.Generator(np.random.Philox(key=20240605))
    conv_args = conv_case(rng)
    dp_args = dp_case(rng)

    if _fast is not None:
        got = _fast.conv2d_forward(*conv_args)
        want = pyfallback.conv2d_forward(*conv_args)
        assert np.allclose(got, want, rtol=1e-5, atol=1e-5), "conv backends disagree"
        for kernel in ("dp_relax_row", "dp_relax_row_ternary"):
            g_a, s_a, _ = getattr(_fast, kernel)(*dp_args)
            g_b, s_b, _ = getattr(pyfallback, kernel)(*dp_args)
            assert np.array_equal(g_a, g_b) and np.array_equal(s_a, s_b), \
                f"{kernel} backends disagree"

    report("conv2d_forward",
           best_of(pyfallback.conv2d_forward, conv_args),
           None if _fast is None else best_of(_fast.conv2d_forward, conv_args))
    report("dp_relax_row",
           best_of(pyfallback.dp_relax_row, dp_args),
           None if _fast is None else best_of(_fast.dp_relax_row, dp_args))
    report("dp_relax_row_ternary",
           best_of(pyfallback.dp_relax_row_ternary, dp_args),
           None if _fast is None else best_of(_fast.dp_relax_row_ternary, dp_args))


if __name__ == "__main__":
    main()

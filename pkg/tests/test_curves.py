"""Rate-distortion curve generation, the shared grid, and outlier filtering."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdprune import (
    LayerSpec,
    ModelGraph,
    NotPrunableError,
    SparsityGrid,
    WorkCounter,
    filter_outliers,
    forward,
    gen_all_curves,
    gen_curve,
    gen_white_noise_calib,
    prune_layer,
    sq_error,
)
from rdprune.curves import dense_activation_cache

from conftest import make_curve, small_dense_model


def test_grid_counts_round_half_up():
    grid = SparsityGrid(4)
    assert list(grid.counts(10)) == [0, 3, 5, 8, 10]
    assert list(grid.counts(4)) == [0, 1, 2, 3, 4]
    assert grid.levels == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_grid_rejects_zero_steps():
    with pytest.raises(ValueError):
        SparsityGrid(0)


@given(st.integers(min_value=1, max_value=200), st.integers(min_value=1, max_value=64))
@settings(max_examples=60, deadline=None)
def test_grid_count_properties(n, s):
    grid = SparsityGrid(s)
    counts = grid.counts(n)
    assert counts[0] == 0
    assert counts[-1] == n
    assert np.all(np.diff(counts) >= 0)
    assert np.all(counts >= 0) and np.all(counts <= n)
    # round-half-up against the obvious floating formula
    for j in range(s + 1):
        want = int(np.floor(j * n / s + 0.5))
        assert counts[j] == want


def test_curve_starts_at_exact_zero(mlp_model, mlp_calib):
    grid = SparsityGrid(5)
    idx = mlp_model.prunable_indices()[0]
    curve = gen_curve(mlp_model, idx, grid, list(mlp_calib)[:4])
    assert curve.points[0].distortion == 0.0
    assert curve.points[0].pruned_count == 0


def test_single_sample_worst_equals_mean(mlp_model, mlp_calib):
    grid = SparsityGrid(5)
    idx = mlp_model.prunable_indices()[1]
    one = list(mlp_calib)[:1]
    mean_c = gen_curve(mlp_model, idx, grid, one, mode="mean")
    worst_c = gen_curve(mlp_model, idx, grid, one, mode="worst")
    for p, q in zip(mean_c.points, worst_c.points):
        assert p.distortion == q.distortion


def test_mean_never_exceeds_worst(cnn_model, cnn_calib):
    grid = SparsityGrid(6)
    samples = list(cnn_calib)[:8]
    for idx in cnn_model.prunable_indices():
        mean_c = gen_curve(cnn_model, idx, grid, samples, mode="mean")
        worst_c = gen_curve(cnn_model, idx, grid, samples, mode="worst")
        for p, q in zip(mean_c.points, worst_c.points):
            assert p.distortion <= q.distortion + 1e-12


def test_last_layer_fully_pruned_no_bias_gives_output_norm():
    # with the last dense zeroed and no bias, f~(x) == 0, so delta == mean ||f(x)||^2
    rng = np.random.Generator(np.random.Philox(key=21))
    m = ModelGraph(name="nb", input_shape=(6,), layers=[
        LayerSpec(kind="dense", weight=rng.normal(size=(5, 6)).astype(np.float32),
                  bias=rng.normal(size=5).astype(np.float32)),
        LayerSpec(kind="relu"),
        LayerSpec(kind="dense", weight=rng.normal(size=(4, 5)).astype(np.float32)),
    ])
    calib = gen_white_noise_calib((6,), count=5, seed=2)
    grid = SparsityGrid(4)
    curve = gen_curve(m, 2, grid, calib)
    norms = [sq_error(forward(m, x), np.zeros(4, dtype=np.float32)) for x in calib]
    want = float(np.float64(sum(norms)) / len(norms))
    assert curve.points[-1].distortion == pytest.approx(want, rel=1e-12)


def test_filter_hand_example():
    grid = SparsityGrid(4)
    curve = make_curve(0, 8, grid, [0.0, 1.0, 3.0, 2.0, 5.0])
    flt = filter_outliers(curve)
    assert [p.valid for p in flt.points] == [True, True, False, True, True]
    assert {p.grid_index for p in flt.valid_points()} == {0, 1, 3, 4}


def naive_filter(deltas):
    # O(S^2) reference: point j is invalid iff some later point is strictly smaller
    n = len(deltas)
    valid = []
    for j in range(n):
        ok = all(deltas[k] >= deltas[j] for k in range(j + 1, n))
        valid.append(ok)
    return valid


def test_filter_matches_quadratic_scan_on_random_curves():
    rng = np.random.Generator(np.random.Philox(key=22))
    grid = SparsityGrid(8)
    for _ in range(100):
        deltas = np.concatenate([[0.0], rng.exponential(1.0, 8)])
        if rng.random() < 0.5:
            deltas = np.cumsum(deltas)  # mix monotone and noisy cases
        curve = make_curve(0, 16, grid, deltas)
        got = [p.valid for p in filter_outliers(curve).points]
        assert got == naive_filter(list(deltas))


@given(st.lists(st.floats(min_value=0.0, max_value=1e6), min_size=1, max_size=20))
@settings(max_examples=80, deadline=None)
def test_filter_survivors_non_decreasing(tail):
    deltas = [0.0] + tail
    grid = SparsityGrid(len(deltas) - 1)
    flt = filter_outliers(make_curve(0, 40, grid, deltas))
    surv = [p.distortion for p in flt.valid_points()]
    assert surv == sorted(surv)
    assert flt.points[0].valid  # j=0 always survives
    assert flt.points[-1].valid  # right anchor always survives
    # idempotent
    again = filter_outliers(flt)
    assert [p.valid for p in again.points] == [p.valid for p in flt.points]


def test_parallel_and_sequential_curves_bit_identical(mlp_model, mlp_calib):
    grid = SparsityGrid(6)
    samples = list(mlp_calib)[:8]
    seq = gen_all_curves(mlp_model, grid, samples, threads=1)
    par = gen_all_curves(mlp_model, grid, samples, threads=4)
    assert len(seq) == len(par) == len(mlp_model.prunable_indices())
    for a, b in zip(seq, par):
        assert a.layer_index == b.layer_index
        for p, q in zip(a.points, b.points):
            assert p == q  # distortions compare bit-for-bit


def test_forward_pair_counter(cnn_model, cnn_calib):
    grid = SparsityGrid(5)
    samples = list(cnn_calib)[:6]
    counter = WorkCounter()
    gen_all_curves(cnn_model, grid, samples, threads=1, counter=counter)
    l = len(cnn_model.prunable_indices())
    assert counter.value == l * (grid.s + 1) * len(samples)
    counter.reset()
    assert counter.value == 0


def test_curve_distortion_matches_full_forward_recompute(cnn_model, cnn_calib):
    # second, independent route: prune a fresh copy, run complete forwards
    grid = SparsityGrid(5)
    samples = list(cnn_calib)[:6]
    curves = gen_all_curves(cnn_model, grid, samples, threads=1, apply_filter=False)
    refs = [forward(cnn_model, x) for x in samples]
    rng = np.random.Generator(np.random.Philox(key=23))
    for _ in range(10):
        curve = curves[int(rng.integers(0, len(curves)))]
        j = int(rng.integers(0, grid.s + 1))
        point = curve.points[j]
        pruned = prune_layer(cnn_model, curve.layer_index, point.pruned_count)
        errs = [sq_error(forward(pruned, x), ref) for x, ref in zip(samples, refs)]
        want = float(np.float64(sum(errs)) / len(errs))
        assert point.distortion == pytest.approx(want, rel=1e-6, abs=1e-12)


def test_gen_curve_with_and_without_cache_identical(mlp_model, mlp_calib):
    grid = SparsityGrid(4)
    samples = list(mlp_calib)[:4]
    idx = mlp_model.prunable_indices()[2]
    cache = dense_activation_cache(mlp_model, samples)
    a = gen_curve(mlp_model, idx, grid, samples, dense_cache=cache)
    b = gen_curve(mlp_model, idx, grid, samples)
    assert a == b


def test_gen_curve_errors(mlp_model, mlp_calib):
    grid = SparsityGrid(4)
    with pytest.raises(NotPrunableError):
        gen_curve(mlp_model, 1, grid, list(mlp_calib)[:2])  # relu layer
    with pytest.raises(ValueError):
        gen_curve(mlp_model, 0, grid, [])
    with pytest.raises(ValueError):
        gen_curve(mlp_model, 0, grid, list(mlp_calib)[:2], mode="median")


def test_curves_ordered_by_layer_index(mlp_model, mlp_calib):
    curves = gen_all_curves(mlp_model, SparsityGrid(3), list(mlp_calib)[:2], threads=2)
    assert [c.layer_index for c in curves] == mlp_model.prunable_indices()

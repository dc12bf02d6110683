"""Per-layer rate-distortion curves.

A curve maps "prune j-th grid fraction of layer i" to the squared-L2 output
distortion it causes, aggregated over a calibration set (mean by default,
maximum in worst-case mode). All other layers stay dense while a curve is
generated; the dense activations are cached once per sample so each grid
point only re-evaluates the network suffix from the pruned layer onward.

Curve generation is embarrassingly parallel across layers. Workers share the
immutable dense model and cache, and each owns a private pruned copy of its
layer, so parallel and sequential runs are bit-identical.
"""

from __future__ import annotations

import concurrent.futures
import threading
from dataclasses import dataclass, replace

import numpy as np

from .engine import forward_collect, forward_from, sq_error
from .errors import NotPrunableError, RDPruneError
from .graph import ModelGraph
from .pruning import magnitude_order

MODES = ("mean", "worst")


class WorkCounter:
    """Thread-safe tally of forward-pair evaluations (cost model: l*(S+1)*N)."""

    def __init__(self):
        self._lock = threading.Lock()
        self.value = 0

    def add(self, n: int):
        with self._lock:
            self.value += n

    def reset(self):
        with self._lock:
            self.value = 0


FORWARD_PAIRS = WorkCounter()


@dataclass(frozen=True)
class SparsityGrid:
    """Shared discretization of per-layer prune counts into S equal fractions."""

    s: int

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("grid size S must be >= 1")

    @property
    def levels(self):
        return [j / self.s for j in range(self.s + 1)]

    def count(self, layer_size: int, j: int) -> int:
        """Pruned-weight count at grid index j: round-half-up(j * n / S)."""
        return (2 * j * layer_size + self.s) // (2 * self.s)

    def counts(self, layer_size: int) -> np.ndarray:
        return np.array([self.count(layer_size, j) for j in range(self.s + 1)], dtype=np.int64)


@dataclass(frozen=True)
class RDPoint:
    grid_index: int
    pruned_count: int
    distortion: float
    valid: bool = True


@dataclass
class RDCurve:
    layer_index: int
    points: list

    def distortions(self) -> np.ndarray:
        return np.array([p.distortion for p in self.points], dtype=np.float64)

    def valid_points(self) -> list:
        return [p for p in self.points if p.valid]

    def max_valid_count(self) -> int:
        return max(p.pruned_count for p in self.valid_points())


def _aggregate(errs, mode):
    if mode == "mean":
        return float(np.float64(sum(errs)) / len(errs))
    if mode == "worst":
        return float(max(errs))
    raise ValueError(f"unknown distortion mode {mode!r}, expected one of {MODES}")


def dense_activation_cache(model: ModelGraph, calib) -> list:
    """Per-sample activations of the dense model, in calibration order."""
    return [forward_collect(model, x) for x in calib]


def gen_curve(model: ModelGraph, layer: int, grid: SparsityGrid, calib, mode="mean",
              dense_cache=None, counter=FORWARD_PAIRS) -> RDCurve:
    """Rate-distortion curve of one layer against the dense model."""
    if not (0 <= layer < len(model.layers)) or not model.layers[layer].prunable:
        raise NotPrunableError(f"layer {layer} is not prunable")
    samples = list(calib)
    if not samples:
        raise ValueError("calibration set is empty")
    if dense_cache is None:
        dense_cache = dense_activation_cache(model, samples)

    spec = model.layers[layer]
    order = magnitude_order(spec.weight)
    counts = grid.counts(spec.weight_count)

    scratch = model.copy()
    flat = scratch.layers[layer].weight.ravel()

    points = []
    prev = 0
    for j, c in enumerate(counts):
        c = int(c)
        flat[order[prev:c]] = np.float32(0.0)  # masks are monotone: extend the zero-set
        prev = c
        errs = []
        for x, cache in zip(samples, dense_cache):
            out = forward_from(scratch, layer, x, cache)
            errs.append(sq_error(cache[-1], out))
        counter.add(len(samples))
        points.append(RDPoint(grid_index=j, pruned_count=c, distortion=_aggregate(errs, mode)))
    return RDCurve(layer_index=layer, points=points)


def filter_outliers(curve: RDCurve) -> RDCurve:
    """Invalidate local-maxima points that break monotonicity.

    A point j is invalid iff some later point has strictly smaller distortion;
    the survivors are the maximal non-decreasing subsequence anchored at the
    right end. j=0 (distortion exactly 0) always survives.
    """
    deltas = curve.distortions()
    run_min = np.inf
    valid = np.empty(len(deltas), dtype=bool)
    for j in range(len(deltas) - 1, -1, -1):
        valid[j] = deltas[j] <= run_min
        run_min = min(run_min, deltas[j])
    points = [replace(p, valid=bool(v)) for p, v in zip(curve.points, valid)]
    return RDCurve(layer_index=curve.layer_index, points=points)


def gen_all_curves(model: ModelGraph, grid: SparsityGrid, calib, mode="mean",
                   threads=None, apply_filter=True, counter=FORWARD_PAIRS) -> list:
    """Curves for every prunable layer, ordered by layer index."""
    samples = list(calib)
    cache = dense_activation_cache(model, samples)
    indices = model.prunable_indices()

    def one(idx):
        curve = gen_curve(model, idx, grid, samples, mode, dense_cache=cache, counter=counter)
        return filter_outliers(curve) if apply_filter else curve

    if threads == 1:
        results = [one(i) for i in indices]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {i: pool.submit(one, i) for i in indices}
            results = []
            for i in indices:
                try:
                    results.append(futures[i].result())
                except RDPruneError as exc:
                    raise RDPruneError(f"curve generation failed for layer {i}: {exc}") from exc
    return results

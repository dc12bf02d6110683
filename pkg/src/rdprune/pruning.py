"""Magnitude-based unstructured pruning.

Per layer, weights are ranked by |w| with ties broken by flat index (lower
index first, so exact zeros are pruned before anything else). The rank order
is a fixed property of the layer's weights, which makes masks monotone: the
zero-set at count k is a subset of the zero-set at any k' > k.

All functions return fresh models; inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotPrunableError
from .graph import ModelGraph


@dataclass
class PruneMask:
    layer_index: int
    kept: np.ndarray  # bool, aligned with the layer's flat weight array


def magnitude_order(weight: np.ndarray) -> np.ndarray:
    """Flat indices ordered by ascending |w|, ties by ascending index."""
    return np.argsort(np.abs(weight.ravel()), kind="stable")


def _check_layer(model: ModelGraph, layer: int):
    if layer < 0 or layer >= len(model.layers) or not model.layers[layer].prunable:
        raise NotPrunableError(f"layer {layer} is not prunable")
    return model.layers[layer]


def prune_mask(model: ModelGraph, layer: int, k: int) -> PruneMask:
    spec = _check_layer(model, layer)
    n = spec.weight_count
    if not 0 <= k <= n:
        raise ValueError(f"prune count {k} out of range [0, {n}] for layer {layer}")
    kept = np.ones(n, dtype=bool)
    kept[magnitude_order(spec.weight)[:k]] = False
    return PruneMask(layer_index=layer, kept=kept)


def prune_layer(model: ModelGraph, layer: int, k: int) -> ModelGraph:
    """Copy of ``model`` with the k smallest-magnitude weights of one layer zeroed."""
    mask = prune_mask(model, layer, k)
    out = model.copy()
    w = out.layers[layer].weight
    flat = w.ravel()
    flat[~mask.kept] = np.float32(0.0)
    return out


def zero_counts(model: ModelGraph) -> list:
    """Zeros currently present in each prunable layer, in layer order."""
    return [int((model.layers[i].weight == 0).sum()) for i in model.prunable_indices()]


def apply_plan(model: ModelGraph, plan) -> ModelGraph:
    """Prune every layer to its planned count; global sparsity = sum(p_i)/total."""
    prunable = model.prunable_indices()
    if len(plan.entries) != len(prunable):
        raise ValueError(
            f"plan covers {len(plan.entries)} layers, model has {len(prunable)} prunable layers"
        )
    out = model.copy()
    for entry, idx in zip(plan.entries, prunable):
        if entry.layer_index != idx:
            raise ValueError(f"plan entry addresses layer {entry.layer_index}, expected {idx}")
        spec = out.layers[idx]
        if entry.layer_size != spec.weight_count:
            raise ValueError(
                f"plan layer {idx} size {entry.layer_size} != model layer size {spec.weight_count}"
            )
        if not 0 <= entry.pruned_count <= spec.weight_count:
            raise ValueError(f"plan count {entry.pruned_count} out of range at layer {idx}")
        flat = spec.weight.ravel()
        flat[magnitude_order(spec.weight)[:entry.pruned_count]] = np.float32(0.0)
    return out

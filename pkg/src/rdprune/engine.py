"""Deterministic forward-inference engine for small feedforward models.

Inference only: no autograd, no training. Models are immutable during
``forward``; repeated calls with the same inputs are bit-identical, so the
engine is safe to drive from many threads at once.

``forward_collect`` / ``forward_from`` expose the per-layer activations so
curve generation can re-evaluate only the suffix of the network that a
single-layer perturbation actually changes.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _kernels
from .errors import EngineShapeError
from .graph import ModelGraph


def _pool_windows(x, kernel, stride, idx):
    if x.ndim != 3:
        raise EngineShapeError(idx, f"pool expects a (C,H,W) input, got shape {x.shape}")
    c, h, w = x.shape
    if h < kernel or w < kernel:
        raise EngineShapeError(idx, f"pool kernel {kernel} exceeds input {h}x{w}")
    win = sliding_window_view(x, (kernel, kernel), axis=(1, 2))
    return win[:, ::stride, ::stride]


def _apply_layer(layer, idx, x, outputs, input_tensor):
    kind = layer.kind
    if kind == "dense":
        w = layer.weight
        if x.ndim != 1:
            raise EngineShapeError(idx, f"dense expects a 1-D input, got shape {x.shape}")
        if w.shape[1] != x.shape[0]:
            raise EngineShapeError(idx, f"dense weight {w.shape} incompatible with input {x.shape}")
        acc = w.astype(np.float64) @ x.astype(np.float64)
        if layer.bias is not None:
            acc += layer.bias.astype(np.float64)
        return acc.astype(np.float32)
    if kind == "conv2d":
        w = layer.weight
        if x.ndim != 3:
            raise EngineShapeError(idx, f"conv2d expects a (C,H,W) input, got shape {x.shape}")
        if w.shape[1] != x.shape[0]:
            raise EngineShapeError(idx, f"conv2d weight {w.shape} incompatible with input {x.shape}")
        stride = int(layer.attrs.get("stride", 1))
        pad = int(layer.attrs.get("padding", 0))
        if x.shape[1] + 2 * pad < w.shape[2] or x.shape[2] + 2 * pad < w.shape[3]:
            raise EngineShapeError(idx, f"conv2d kernel {w.shape[2:]} exceeds padded input")
        return _kernels.conv2d_forward(
            np.ascontiguousarray(x), np.ascontiguousarray(w), layer.bias,
            stride, stride, pad, pad,
        )
    if kind == "relu":
        return np.maximum(x, np.float32(0.0))
    if kind == "maxpool2d":
        kernel = int(layer.attrs.get("kernel", 2))
        stride = int(layer.attrs.get("stride", kernel))
        return np.ascontiguousarray(_pool_windows(x, kernel, stride, idx).max(axis=(3, 4)))
    if kind == "avgpool2d":
        kernel = int(layer.attrs.get("kernel", 2))
        stride = int(layer.attrs.get("stride", kernel))
        win = _pool_windows(x, kernel, stride, idx)
        return win.astype(np.float64).mean(axis=(3, 4)).astype(np.float32)
    if kind == "flatten":
        return np.ascontiguousarray(x).reshape(-1)
    if kind == "add-skip":
        src = int(layer.attrs.get("source", -1))
        other = input_tensor if src < 0 else outputs[src]
        if other.shape != x.shape:
            raise EngineShapeError(
                idx, f"add-skip source shape {other.shape} != input shape {x.shape}"
            )
        return x + other
    raise EngineShapeError(idx, f"unsupported layer kind {kind!r}")


def _check_input(model, x):
    x = np.asarray(x, dtype=np.float32)
    if tuple(x.shape) != model.input_shape:
        raise EngineShapeError(
            -1, f"input shape {tuple(x.shape)} != model input shape {model.input_shape}"
        )
    return x


def forward_collect(model: ModelGraph, x) -> list:
    """Run the model and return every layer's output (list of length len(layers))."""
    x = _check_input(model, x)
    outputs = []
    cur = x
    for idx, layer in enumerate(model.layers):
        cur = _apply_layer(layer, idx, cur, outputs, x)
        outputs.append(cur)
    return outputs


def forward(model: ModelGraph, x) -> np.ndarray:
    """Final-layer output for one input tensor."""
    outs = forward_collect(model, x)
    return outs[-1] if outs else _check_input(model, x)


def forward_from(model: ModelGraph, start: int, x, cached_outputs: list) -> np.ndarray:
    """Recompute layers ``start..end`` reusing cached activations before ``start``.

    ``cached_outputs`` must come from ``forward_collect`` on a model whose
    layers before ``start`` are identical. add-skip sources earlier than
    ``start`` resolve to the cached values.
    """
    x = _check_input(model, x)
    outputs = list(cached_outputs[:start])
    cur = x if start == 0 else outputs[start - 1]
    for idx in range(start, len(model.layers)):
        cur = _apply_layer(model.layers[idx], idx, cur, outputs, x)
        outputs.append(cur)
    return cur


def output_sq_error(model_a: ModelGraph, model_b: ModelGraph, x) -> float:
    """Squared L2 distance between the two models' outputs on one input."""
    if not model_a.structurally_equal(model_b):
        raise EngineShapeError(-1, "models are not structurally identical")
    return sq_error(forward(model_a, x), forward(model_b, x))


def sq_error(out_a: np.ndarray, out_b: np.ndarray) -> float:
    diff = (out_a - out_b).astype(np.float64).ravel()
    return float(diff @ diff)

"""Model graph data types.

A model is an ordered list of layers over float32 tensors (numpy arrays in
row-major order). Only ``dense`` and ``conv2d`` layers carry weights and are
prunable; biases are never counted as prunable parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeInconsistencyError, UnknownLayerKindError

# Kinds the inference engine implements. add-skip adds the output of an
# earlier layer (attrs["source"], -1 = model input) to the current activation.
LAYER_KINDS = ("dense", "conv2d", "relu", "maxpool2d", "avgpool2d", "flatten", "add-skip")
PRUNABLE_KINDS = ("dense", "conv2d")


def as_f32(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=np.float32))


@dataclass
class LayerSpec:
    kind: str
    weight: np.ndarray | None = None
    bias: np.ndarray | None = None
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise UnknownLayerKindError(f"unknown layer kind {self.kind!r}")
        if self.weight is not None:
            self.weight = as_f32(self.weight)
        if self.bias is not None:
            self.bias = as_f32(self.bias)
        if self.kind == "dense" and self.weight is not None and self.weight.ndim != 2:
            raise ShapeInconsistencyError("dense weight must be 2-D (out, in)")
        if self.kind == "conv2d" and self.weight is not None and self.weight.ndim != 4:
            raise ShapeInconsistencyError("conv2d weight must be 4-D (out_c, in_c, kH, kW)")
        if self.kind not in PRUNABLE_KINDS and self.weight is not None:
            raise ShapeInconsistencyError(f"{self.kind} layer must not carry a weight tensor")

    @property
    def prunable(self) -> bool:
        return self.kind in PRUNABLE_KINDS and self.weight is not None

    @property
    def weight_count(self) -> int:
        return 0 if self.weight is None else int(self.weight.size)

    def copy(self) -> "LayerSpec":
        return LayerSpec(
            kind=self.kind,
            weight=None if self.weight is None else self.weight.copy(),
            bias=None if self.bias is None else self.bias.copy(),
            attrs=dict(self.attrs),
        )


@dataclass
class ModelGraph:
    name: str
    input_shape: tuple
    layers: list

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        for idx, layer in enumerate(self.layers):
            if layer.kind == "add-skip":
                src = int(layer.attrs.get("source", -1))
                if src >= idx:
                    raise ShapeInconsistencyError(
                        f"add-skip at layer {idx} references non-earlier layer {src}"
                    )

    @property
    def total_prunable(self) -> int:
        return sum(l.weight_count for l in self.layers if l.prunable)

    def prunable_indices(self) -> list:
        """Absolute indices of prunable layers, in layer order."""
        return [i for i, l in enumerate(self.layers) if l.prunable]

    def layer_sizes(self) -> list:
        """Weight counts of prunable layers, in layer order."""
        return [self.layers[i].weight_count for i in self.prunable_indices()]

    def copy(self) -> "ModelGraph":
        return ModelGraph(
            name=self.name,
            input_shape=self.input_shape,
            layers=[l.copy() for l in self.layers],
        )

    def structurally_equal(self, other: "ModelGraph") -> bool:
        """Same topology and tensor shapes; weight values may differ."""
        if self.input_shape != other.input_shape or len(self.layers) != len(other.layers):
            return False
        for a, b in zip(self.layers, other.layers):
            if a.kind != b.kind or a.attrs != b.attrs:
                return False
            for ta, tb in ((a.weight, b.weight), (a.bias, b.bias)):
                if (ta is None) != (tb is None):
                    return False
                if ta is not None and ta.shape != tb.shape:
                    return False
        return True

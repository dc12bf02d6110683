"""Checkpoint conversion: torch modules to the flat portable layer chain.

The converter walks the architecture's module sequence, folds every
batchnorm into the conv/dense right before it, expands residual blocks into
explicit add-skip layers, and rejects anything outside the supported set by
module name. Export also runs a parity self-check: the written tensors are
evaluated with a small numpy forward and compared against the torch model
on seeded white-noise inputs; the result lands in export_manifest.json.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .archs import ResidualBlock, build_arch, load_checkpoint
from .fold import fold_batchnorm
from .formats import PRUNABLE_KINDS, write_calib, write_model

PARITY_COUNT = 16
PARITY_TOL = 1e-4


class ExportError(Exception):
    pass


@dataclass
class ExportManifest:
    """What was exported and how: mapping, folds, parity evidence."""

    source: str
    arch: str
    mapping: list = field(default_factory=list)  # {"module", "kind", "layer_index"}
    folds: list = field(default_factory=list)    # {"batchnorm", "into"}
    parity: dict = field(default_factory=dict)

    def check(self):
        prunable = [m["module"] for m in self.mapping if m["kind"] in PRUNABLE_KINDS]
        if len(prunable) != len(set(prunable)):
            raise ExportError("a prunable module was mapped more than once")


def _int_pair(value, what):
    pair = (value, value) if isinstance(value, int) else tuple(value)
    if len(pair) != 2 or pair[0] != pair[1]:
        raise ExportError(f"{what} must be square, got {value!r}")
    return int(pair[0])


def _np32(tensor):
    return np.ascontiguousarray(tensor.detach().numpy(), dtype=np.float32)


class _Converter:
    def __init__(self):
        self.layers = []
        self.mapping = []
        self.folds = []

    def _emit(self, kind, module_name=None, weight=None, bias=None, attrs=None):
        self.layers.append({"kind": kind, "weight": weight, "bias": bias,
                            "attrs": attrs or {}})
        if module_name is not None:
            self.mapping.append({"module": module_name, "kind": kind,
                                 "layer_index": len(self.layers) - 1})

    def add(self, name, module):
        if isinstance(module, nn.Linear):
            self._emit("dense", name, _np32(module.weight),
                       None if module.bias is None else _np32(module.bias))
        elif isinstance(module, nn.Conv2d):
            if module.groups != 1:
                raise ExportError(f"cannot export module '{name}': grouped conv")
            if _int_pair(module.dilation, f"'{name}' dilation") != 1:
                raise ExportError(f"cannot export module '{name}': dilated conv")
            attrs = {"stride": _int_pair(module.stride, f"'{name}' stride"),
                     "padding": _int_pair(module.padding, f"'{name}' padding")}
            self._emit("conv2d", name, _np32(module.weight),
                       None if module.bias is None else _np32(module.bias),
                       attrs)
        elif isinstance(module, (nn.BatchNorm1d, nn.BatchNorm2d)):
            self._fold_into_last(name, module)
        elif isinstance(module, nn.ReLU):
            self._emit("relu", name)
        elif isinstance(module, (nn.MaxPool2d, nn.AvgPool2d)):
            kind = "maxpool2d" if isinstance(module, nn.MaxPool2d) else "avgpool2d"
            kernel = _int_pair(module.kernel_size, f"'{name}' kernel")
            stride = kernel if module.stride is None else \
                _int_pair(module.stride, f"'{name}' stride")
            if _int_pair(module.padding, f"'{name}' padding") != 0:
                raise ExportError(f"cannot export module '{name}': padded pooling")
            self._emit(kind, name, attrs={"kernel": kernel, "stride": stride})
        elif isinstance(module, nn.Flatten):
            if module.start_dim != 1 or module.end_dim != -1:
                raise ExportError(f"cannot export module '{name}': partial flatten")
            self._emit("flatten", name)
        elif isinstance(module, ResidualBlock):
            self._expand_residual(name, module)
        elif isinstance(module, nn.Sequential):
            for child_name, child in module.named_children():
                self.add(f"{name}.{child_name}", child)
        else:
            raise ExportError(
                f"cannot export module '{name}' of type {type(module).__name__}"
            )

    def _fold_into_last(self, name, bn):
        if not self.layers or self.layers[-1]["kind"] not in PRUNABLE_KINDS:
            raise ExportError(
                f"batchnorm '{name}' does not follow a conv/dense layer"
            )
        target = self.layers[-1]
        target_name = self.mapping[-1]["module"]
        w, b = fold_batchnorm(torch.from_numpy(target["weight"]),
                              None if target["bias"] is None
                              else torch.from_numpy(target["bias"]), bn)
        target["weight"], target["bias"] = w, b
        self.folds.append({"batchnorm": name, "into": target_name})

    def _expand_residual(self, name, block):
        # the block input is the previous layer's output (-1 = model input)
        source = len(self.layers) - 1
        self.add(f"{name}.conv1", block.conv1)
        self._fold_into_last(f"{name}.bn1", block.bn1)
        self.add(f"{name}.relu1", block.relu1)
        self.add(f"{name}.conv2", block.conv2)
        self._fold_into_last(f"{name}.bn2", block.bn2)
        self._emit("add-skip", f"{name}.skip", attrs={"source": source})
        self.add(f"{name}.relu_out", block.relu_out)


def convert(model) -> _Converter:
    body = model if isinstance(model, nn.Sequential) else getattr(model, "body", None)
    if body is None:
        raise ExportError(
            f"cannot export module of type {type(model).__name__}: no layer sequence"
        )
    conv = _Converter()
    for name, module in body.named_children():
        conv.add(name, module)
    return conv


# ---------------------------------------------------------------------------
# numpy forward over the exported chain (export-time self check)


def _conv2d(x, w, b, stride, padding):
    c, h, ww = x.shape
    out_c, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (ww + 2 * padding - kw) // stride + 1
    out = np.zeros((out_c, oh, ow), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + oh * stride:stride, j:j + ow * stride:stride]
            out += np.einsum("oc,chw->ohw", w[:, :, i, j].astype(np.float64),
                             patch.astype(np.float64))
    if b is not None:
        out += b.astype(np.float64)[:, None, None]
    return out.astype(np.float32)


def _pool(x, kernel, stride, op):
    c, h, w = x.shape
    oh = (h - kernel) // stride + 1
    ow = (w - kernel) // stride + 1
    windows = [x[:, i:i + oh * stride:stride, j:j + ow * stride:stride]
               for i in range(kernel) for j in range(kernel)]
    stacked = np.stack(windows)
    return (stacked.max(axis=0) if op == "max"
            else stacked.mean(axis=0, dtype=np.float64).astype(np.float32))


def forward_chain(layers, x):
    """Evaluate the exported layer chain on one sample (no torch, no rdprune)."""
    outputs = []
    cur = np.asarray(x, dtype=np.float32)
    for layer in layers:
        kind = layer["kind"]
        attrs = layer.get("attrs") or {}
        if kind == "dense":
            acc = layer["weight"].astype(np.float64) @ cur.astype(np.float64)
            if layer["bias"] is not None:
                acc += layer["bias"].astype(np.float64)
            cur = acc.astype(np.float32)
        elif kind == "conv2d":
            cur = _conv2d(cur, layer["weight"], layer["bias"],
                          attrs.get("stride", 1), attrs.get("padding", 0))
        elif kind == "relu":
            cur = np.maximum(cur, 0.0)
        elif kind in ("maxpool2d", "avgpool2d"):
            kernel = attrs.get("kernel", 2)
            cur = _pool(cur, kernel, attrs.get("stride", kernel), kind[:3])
        elif kind == "flatten":
            cur = np.ascontiguousarray(cur).reshape(-1)
        elif kind == "add-skip":
            src = attrs["source"]
            cur = cur + (x if src == -1 else outputs[src])
        else:
            raise ExportError(f"self-check cannot evaluate kind {kind!r}")
        outputs.append(cur)
    return cur


def _parity_check(model, layers, input_shape, seed, count):
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    inputs = rng.standard_normal(size=(count, *input_shape), dtype=np.float32)
    with torch.no_grad():
        ref = model(torch.from_numpy(inputs)).numpy().astype(np.float32)
    worst = 0.0
    for k in range(count):
        got = forward_chain(layers, inputs[k])
        scale = max(float(np.abs(ref[k]).max()), 1e-12)
        worst = max(worst, float(np.abs(got - ref[k]).max()) / scale)
    return inputs, ref, worst


def export_model(ckpt_path, arch: str, out_dir, parity_seed=0,
                 parity_count=PARITY_COUNT):
    """Export a checkpoint; returns the ExportManifest.

    Writes model.json/model.bin, parity_inputs.bin/parity_outputs.bin (the
    seeded inputs and the framework outputs, both in calibration format) and
    export_manifest.json into out_dir.
    """
    ckpt_path = Path(ckpt_path)
    model = load_checkpoint(build_arch(arch), ckpt_path)
    conv = convert(model)

    digest = hashlib.sha256(ckpt_path.read_bytes()).hexdigest()[:16]
    manifest = ExportManifest(source=f"{ckpt_path.name}:{digest}", arch=arch,
                              mapping=conv.mapping, folds=conv.folds)
    manifest.check()

    inputs, ref, worst = _parity_check(model, conv.layers, model.input_shape,
                                       parity_seed, parity_count)
    manifest.parity = {
        "seed": int(parity_seed),
        "count": int(parity_count),
        "max_rel_dev": worst,
        "tolerance": PARITY_TOL,
    }
    if worst > PARITY_TOL:
        raise ExportError(
            f"parity check failed: max relative deviation {worst:.3e} > {PARITY_TOL}"
        )

    out_dir = Path(out_dir)
    write_model(arch, model.input_shape, conv.layers, out_dir)
    write_calib(inputs, out_dir / "parity_inputs.bin")
    write_calib(ref, out_dir / "parity_outputs.bin")
    (out_dir / "export_manifest.json").write_text(
        json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n")
    return manifest

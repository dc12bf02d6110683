"""Portable on-disk formats for models, calibration sets, curves and plans.

See docs/FORMATS.md for the byte-level layout. Weights travel as a
human-readable JSON manifest plus one raw little-endian float32 blob; every
blob slice carries a CRC-32 that is verified on load. All writers are
deterministic: identical objects produce identical bytes.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .curves import RDCurve, RDPoint
from .errors import ChecksumError, FormatError, ShapeInconsistencyError
from .graph import LayerSpec, ModelGraph

MODEL_FORMAT = "rdprune-model"
CALIB_MAGIC = b"RDPC"

# Calibration sources: "real" for dataset-derived samples, or a
# white-noise spec recording the generator seed and distribution.
REAL_SOURCE = "real"


@dataclass
class CalibrationSet:
    """Batch of model inputs; ``samples`` has shape (count, *input_shape)."""

    samples: np.ndarray
    source: str = REAL_SOURCE

    def __post_init__(self):
        self.samples = np.ascontiguousarray(np.asarray(self.samples, dtype=np.float32))
        if self.samples.shape[0] < 1:
            raise FormatError("calibration set must be non-empty")

    def __len__(self):
        return self.samples.shape[0]

    def __iter__(self):
        return iter(self.samples)

    @property
    def sample_shape(self):
        return tuple(self.samples.shape[1:])


def gen_white_noise_calib(shape, count: int = 256, seed: int = 0) -> CalibrationSet:
    """i.i.d. standard-normal calibration inputs (zero-data pruning).

    Stream: numpy Philox(key=seed) -> Generator.standard_normal(float32),
    samples drawn consecutively. Deterministic given (shape, count, seed).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    data = rng.standard_normal(size=(int(count), *tuple(shape)), dtype=np.float32)
    return CalibrationSet(data, source=f"white-noise(seed={int(seed)},standard-normal)")


# ---------------------------------------------------------------------------
# model.json + model.bin


def _tensor_entry(arr, blob):
    raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    entry = {
        "shape": [int(d) for d in arr.shape],
        "offset": len(blob),
        "nbytes": len(raw),
        "crc32": zlib.crc32(raw) & 0xFFFFFFFF,
    }
    blob.extend(raw)
    return entry


def _tensor_from_blob(entry, blob, what):
    shape = tuple(int(d) for d in entry["shape"])
    offset, nbytes = int(entry["offset"]), int(entry["nbytes"])
    raw = bytes(blob[offset:offset + nbytes])
    if len(raw) != nbytes:
        raise ShapeInconsistencyError(f"{what}: blob ends before declared extent")
    if int(np.prod(shape, dtype=np.int64)) * 4 != nbytes:
        raise ShapeInconsistencyError(
            f"{what}: shape {list(shape)} needs {int(np.prod(shape)) * 4} bytes, blob stores {nbytes}"
        )
    if zlib.crc32(raw) & 0xFFFFFFFF != int(entry["crc32"]):
        raise ChecksumError(f"{what}: stored checksum does not match blob contents")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def _resolve_model_paths(path, stem="model"):
    path = Path(path)
    if path.suffix == ".json":
        return path, path.with_suffix(".bin")
    return path / f"{stem}.json", path / f"{stem}.bin"


def save_model(model: ModelGraph, path, stem="model"):
    """Write ``<stem>.json`` + ``<stem>.bin``; ``path`` is a directory or a .json path."""
    manifest_path, blob_path = _resolve_model_paths(path, stem)
    blob = bytearray()
    layers = []
    for layer in model.layers:
        entry = {"kind": layer.kind}
        if layer.attrs:
            entry["attrs"] = {k: layer.attrs[k] for k in sorted(layer.attrs)}
        if layer.weight is not None:
            entry["weight"] = _tensor_entry(layer.weight, blob)
        if layer.bias is not None:
            entry["bias"] = _tensor_entry(layer.bias, blob)
        layers.append(entry)
    manifest = {
        "format": MODEL_FORMAT,
        "version": 1,
        "name": model.name,
        "input_shape": [int(d) for d in model.input_shape],
        "blob": blob_path.name,
        "total_prunable": model.total_prunable,
        "layers": layers,
    }
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    blob_path.write_bytes(bytes(blob))
    return manifest_path


def load_model(path, stem="model") -> ModelGraph:
    manifest_path, _ = _resolve_model_paths(path, stem)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read model manifest {manifest_path}: {exc}") from exc
    if manifest.get("format") != MODEL_FORMAT:
        raise FormatError(f"{manifest_path} is not a {MODEL_FORMAT} manifest")
    blob_path = manifest_path.parent / manifest["blob"]
    try:
        blob = blob_path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read weight blob {blob_path}: {exc}") from exc
    layers = []
    for i, entry in enumerate(manifest["layers"]):
        weight = bias = None
        if "weight" in entry:
            weight = _tensor_from_blob(entry["weight"], blob, f"layer {i} weight")
        if "bias" in entry:
            bias = _tensor_from_blob(entry["bias"], blob, f"layer {i} bias")
        layers.append(LayerSpec(kind=entry["kind"], weight=weight, bias=bias,
                                attrs=dict(entry.get("attrs", {}))))
    model = ModelGraph(
        name=manifest.get("name", manifest_path.stem),
        input_shape=tuple(manifest["input_shape"]),
        layers=layers,
    )
    declared = manifest.get("total_prunable")
    if declared is not None and int(declared) != model.total_prunable:
        raise ShapeInconsistencyError(
            f"manifest declares total_prunable={declared}, weights sum to {model.total_prunable}"
        )
    return model


# ---------------------------------------------------------------------------
# calib.bin: magic, u32 count, u32 rank, rank x u32 dims, samples (LE f32)


def save_calib(calib: CalibrationSet, path):
    path = Path(path)
    count = len(calib)
    dims = calib.sample_shape
    header = CALIB_MAGIC + struct.pack("<II", count, len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims) if dims else b""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + np.ascontiguousarray(calib.samples, dtype="<f4").tobytes())


def load_calib(path) -> CalibrationSet:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read calibration file {path}: {exc}") from exc
    if raw[:4] != CALIB_MAGIC:
        raise FormatError(f"{path}: bad magic, not a calibration file")
    count, rank = struct.unpack_from("<II", raw, 4)
    dims = struct.unpack_from(f"<{rank}I", raw, 12)
    payload = raw[12 + 4 * rank:]
    expected = count * int(np.prod(dims, dtype=np.int64) if dims else 1) * 4
    if len(payload) != expected:
        raise ShapeInconsistencyError(
            f"{path}: header declares {expected} payload bytes, file has {len(payload)}"
        )
    samples = np.frombuffer(payload, dtype="<f4").reshape((count, *dims)).astype(np.float32)
    return CalibrationSet(samples, source=REAL_SOURCE)


# ---------------------------------------------------------------------------
# curves.csv

_CURVES_HEADER = "layer_index,grid_index,pruned_count,distortion,valid_flag"


def save_curves(curves, path):
    path = Path(path)
    lines = [_CURVES_HEADER]
    for curve in curves:
        for p in curve.points:
            lines.append(
                f"{curve.layer_index},{p.grid_index},{p.pruned_count},{p.distortion!r},{int(p.valid)}"
            )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def load_curves(path):
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read curves file {path}: {exc}") from exc
    if not lines or lines[0] != _CURVES_HEADER:
        raise FormatError(f"{path}: missing curves header")
    by_layer = {}
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise FormatError(f"{path}:{ln}: expected 5 columns")
        li, gi, pc = int(parts[0]), int(parts[1]), int(parts[2])
        point = RDPoint(grid_index=gi, pruned_count=pc,
                        distortion=float(parts[3]), valid=bool(int(parts[4])))
        by_layer.setdefault(li, []).append(point)
    curves = []
    for li in sorted(by_layer):
        points = sorted(by_layer[li], key=lambda p: p.grid_index)
        curves.append(RDCurve(layer_index=li, points=points))
    return curves


# ---------------------------------------------------------------------------
# plan.json


def save_plan(plan, path):
    from .allocator import AllocationPlan  # local import to avoid a cycle

    assert isinstance(plan, AllocationPlan)
    payload = {
        "format": "rdprune-plan",
        "version": 1,
        "requested_ratio": plan.requested_ratio,
        "requested_budget": plan.requested_budget,
        "unit": plan.unit,
        "bins": plan.bins,
        "achieved_total": plan.achieved_total,
        "total_prunable": plan.total_prunable,
        "objective": plan.objective,
        "layers": [
            {
                "layer_index": int(e.layer_index),
                "grid_index": int(e.grid_index),
                "pruned_count": int(e.pruned_count),
                "layer_size": int(e.layer_size),
            }
            for e in plan.entries
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def save_dp_trace(table, path):
    """Dump the DP value and decision tables, one row per (layer, cell)."""
    lines = ["row,cell,g,s"]
    n_rows, n_cells = table.g.shape
    for i in range(n_rows):
        for b in range(n_cells):
            lines.append(f"{i},{b},{float(table.g[i, b])!r},{int(table.s[i, b])}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def load_plan(path):
    from .allocator import AllocationPlan, PlanEntry

    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read plan {path}: {exc}") from exc
    if payload.get("format") != "rdprune-plan":
        raise FormatError(f"{path} is not an rdprune plan")
    entries = [
        PlanEntry(
            layer_index=int(e["layer_index"]),
            grid_index=int(e["grid_index"]),
            pruned_count=int(e["pruned_count"]),
            layer_size=int(e["layer_size"]),
        )
        for e in payload["layers"]
    ]
    return AllocationPlan(
        entries=entries,
        requested_budget=int(payload["requested_budget"]),
        requested_ratio=payload.get("requested_ratio"),
        unit=int(payload["unit"]),
        bins=int(payload["bins"]),
        total_prunable=int(payload["total_prunable"]),
        objective=float(payload["objective"]),
    )

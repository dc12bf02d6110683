"""Writers for the portable model and calibration formats.

Independent implementation of the layouts in ../docs/FORMATS.md: a JSON
manifest plus a little-endian float32 blob with per-tensor CRC-32, and the
RDPC calibration container. Byte-deterministic: same content, same file.
"""

import json
import struct
import zlib
from pathlib import Path

import numpy as np

MODEL_FORMAT = "rdprune-model"
CALIB_MAGIC = b"RDPC"
PRUNABLE_KINDS = ("dense", "conv2d")


def _tensor_entry(arr, blob: bytearray):
    raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    entry = {
        "shape": [int(d) for d in arr.shape],
        "offset": len(blob),
        "nbytes": len(raw),
        "crc32": zlib.crc32(raw) & 0xFFFFFFFF,
    }
    blob.extend(raw)
    return entry


def write_model(name, input_shape, layers, out_dir, stem="model"):
    """Write <stem>.json + <stem>.bin from layer dicts.

    A layer dict has "kind", optional "attrs", optional "weight"/"bias"
    float32 arrays. Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    blob = bytearray()
    manifest_layers = []
    total_prunable = 0
    for layer in layers:
        entry = {"kind": layer["kind"]}
        attrs = layer.get("attrs")
        if attrs:
            entry["attrs"] = {k: attrs[k] for k in sorted(attrs)}
        if layer.get("weight") is not None:
            entry["weight"] = _tensor_entry(layer["weight"], blob)
            if layer["kind"] in PRUNABLE_KINDS:
                total_prunable += int(np.asarray(layer["weight"]).size)
        if layer.get("bias") is not None:
            entry["bias"] = _tensor_entry(layer["bias"], blob)
        manifest_layers.append(entry)
    manifest = {
        "format": MODEL_FORMAT,
        "version": 1,
        "name": name,
        "input_shape": [int(d) for d in input_shape],
        "blob": f"{stem}.bin",
        "total_prunable": total_prunable,
        "layers": manifest_layers,
    }
    manifest_path = out_dir / f"{stem}.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out_dir / f"{stem}.bin").write_bytes(bytes(blob))
    return manifest_path


def write_calib(samples, path):
    """Write float32 samples of shape (count, *dims) as an RDPC file."""
    samples = np.ascontiguousarray(samples, dtype="<f4")
    if samples.ndim < 1 or samples.shape[0] < 1:
        raise ValueError("calibration export needs at least one sample")
    dims = samples.shape[1:]
    header = CALIB_MAGIC + struct.pack("<II", samples.shape[0], len(dims))
    if dims:
        header += struct.pack(f"<{len(dims)}I", *dims)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + samples.tobytes())
    return path

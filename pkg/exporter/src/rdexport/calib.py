"""Calibration export: deterministic sample selection from .npy datasets."""

from pathlib import Path

import numpy as np

from .formats import write_calib


class CalibExportError(Exception):
    pass


def load_dataset(dataset_dir):
    """Concatenate every .npy in the directory (sorted by name), axis 0."""
    dataset_dir = Path(dataset_dir)
    files = sorted(dataset_dir.glob("*.npy"))
    if not files:
        raise CalibExportError(f"no .npy files in {dataset_dir}")
    parts = [np.load(f) for f in files]
    shapes = {p.shape[1:] for p in parts}
    if len(shapes) != 1:
        raise CalibExportError(f"dataset files disagree on sample shape: {sorted(shapes)}")
    return np.concatenate(parts, axis=0)


def select_samples(data, count, seed):
    """First ``count`` of a seeded permutation; deterministic given seed."""
    total = data.shape[0]
    if count < 1 or count > total:
        raise CalibExportError(f"count {count} outside [1, {total}] available samples")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    idx = rng.permutation(total)[:count]
    return data[idx]


def preprocess(samples, mean=None, std=None):
    """Per-channel (axis 0 of each sample) normalization, then float32.

    mean/std are scalars or per-channel sequences; the written bytes are the
    float32 result, so round-trips are bit-exact.
    """
    out = np.asarray(samples, dtype=np.float64)
    def shaped(v):
        arr = np.asarray(v, dtype=np.float64)
        if arr.ndim == 0:
            return arr
        if out.ndim < 2 or arr.shape[0] != out.shape[1]:
            raise CalibExportError(
                f"normalization over {arr.shape[0]} channels does not match "
                f"sample shape {out.shape[1:]}"
            )
        return arr.reshape((1, -1) + (1,) * (out.ndim - 2))
    if mean is not None:
        out = out - shaped(mean)
    if std is not None:
        out = out / shaped(std)
    return out.astype(np.float32)


def export_calib(dataset_dir, count, seed, out_path, mean=None, std=None,
                 expect_shape=None):
    """Select, preprocess and write calib.bin; returns the written path."""
    data = load_dataset(dataset_dir)
    if expect_shape is not None and tuple(data.shape[1:]) != tuple(expect_shape):
        raise CalibExportError(
            f"dataset samples have shape {tuple(data.shape[1:])}, "
            f"model expects {tuple(expect_shape)}"
        )
    chosen = select_samples(data, count, seed)
    return write_calib(preprocess(chosen, mean, std), out_path)

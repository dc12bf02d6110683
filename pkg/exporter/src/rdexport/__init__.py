"""Torch-to-rdprune exporter.

Converts torch checkpoints of the supported toy architectures into the
portable model format (folding batchnorm into the preceding conv/dense) and
dataset slices into calibration files. Writes the formats directly; the
rdprune package is never imported.
"""

from .archs import ARCHS, build_arch
from .export import ExportError, ExportManifest, export_model
from .calib import export_calib

__version__ = "0.1.0"

__all__ = [
    "ARCHS",
    "ExportError",
    "ExportManifest",
    "build_arch",
    "export_calib",
    "export_model",
]

"""Shared fixtures: trained toy models from fixtures/ and curve builders."""

import pathlib

import numpy as np
import pytest

from rdprune import (
    LayerSpec,
    ModelGraph,
    RDCurve,
    RDPoint,
    load_calib,
    load_model,
)

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"

# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


_CACHE = {}


def _load(name):
    if name not in _CACHE:
        _CACHE[name] = (load_model(FIXTURES / name), load_calib(FIXTURES / name / "calib.bin"))
    return _CACHE[name]


@pytest.fixture
def mlp_model():
    return _load("mlp_toy")[0].copy()


@pytest.fixture(scope="session")
def mlp_calib():
    return _load("mlp_toy")[1]


@pytest.fixture
def cnn_model():
    return _load("cnn_toy")[0].copy()


@pytest.fixture(scope="session")
def cnn_calib():
    return _load("cnn_toy")[1]


def small_dense_model(seed=0, dims=(6, 5, 4), bias=True, relu=True):
    """Random dense stack for fast tests; seeded, so values are frozen."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    layers = []
    for i in range(len(dims) - 1):
        w = rng.normal(size=(dims[i + 1], dims[i])).astype(np.float32)
        b = rng.normal(size=dims[i + 1]).astype(np.float32) if bias else None
        layers.append(LayerSpec(kind="dense", weight=w, bias=b))
        if relu and i < len(dims) - 2:
            layers.append(LayerSpec(kind="relu"))
    return ModelGraph(name=f"small{seed}", input_shape=(dims[0],), layers=layers)


def make_curve(layer_index, layer_size, grid, deltas, valid=None):
    """RDCurve from raw distortions; counts follow the shared grid rule."""
    if valid is None:
        valid = [True] * len(deltas)
    assert len(deltas) == grid.s + 1
    points = [
        RDPoint(grid_index=j, pruned_count=grid.count(layer_size, j),
                distortion=float(d), valid=bool(v))
        for j, (d, v) in enumerate(zip(deltas, valid))
    ]
    return RDCurve(layer_index=layer_index, points=points)

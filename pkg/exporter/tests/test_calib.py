"""Calibration export: selection determinism and bit-exact round-trips.

The round-trip checks read the written file back with the rdprune loader,
the consumer the format exists for.
"""

import numpy as np
import pytest
from click.testing import CliRunner

import rdprune
from rdexport.calib import (
    CalibExportError, export_calib, load_dataset, preprocess, select_samples,
)
from rdexport.cli import export_calib_cmd


@pytest.fixture
def dataset(tmp_path):
    rng = np.random.Generator(np.random.Philox(key=101))
    d = tmp_path / "data"
    d.mkdir()
    # float64 on disk: export must own the cast to float32
    np.save(d / "part_b.npy", rng.normal(size=(24, 3, 4, 4)))
    np.save(d / "part_a.npy", rng.normal(size=(40, 3, 4, 4)))
    return d


def test_load_dataset_concatenates_sorted(dataset):
    data = load_dataset(dataset)
    assert data.shape == (64, 3, 4, 4)
    first_file = np.load(dataset / "part_a.npy")
    assert np.array_equal(data[:40], first_file)


def test_load_dataset_empty_dir(tmp_path):
    with pytest.raises(CalibExportError, match="no .npy"):
        load_dataset(tmp_path)


def test_load_dataset_shape_disagreement(dataset):
    np.save(dataset / "part_c.npy", np.zeros((4, 2, 4, 4)))
    with pytest.raises(CalibExportError, match="disagree"):
        load_dataset(dataset)


def test_select_samples_deterministic(dataset):
    data = load_dataset(dataset)
    a = select_samples(data, 16, seed=9)
    b = select_samples(data, 16, seed=9)
    c = select_samples(data, 16, seed=10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_select_samples_count_bounds(dataset):
    data = load_dataset(dataset)
    with pytest.raises(CalibExportError):
        select_samples(data, 0, seed=1)
    with pytest.raises(CalibExportError):
        select_samples(data, 65, seed=1)
    assert select_samples(data, 64, seed=1).shape[0] == 64


def test_preprocess_channel_mismatch(dataset):
    data = load_dataset(dataset)
    with pytest.raises(CalibExportError, match="channels"):
        preprocess(data[:4], mean=[0.1, 0.2])


def test_round_trip_bit_exact(dataset, tmp_path):
    """The bytes rdprune reads back equal the preprocessed float32 source."""
    out = tmp_path / "calib.bin"
    export_calib(dataset, count=20, seed=3, out_path=out,
                 mean=[0.1, 0.2, 0.3], std=[0.9, 1.1, 1.0])
    want = preprocess(select_samples(load_dataset(dataset), 20, seed=3),
                      mean=[0.1, 0.2, 0.3], std=[0.9, 1.1, 1.0])
    got = rdprune.load_calib(out).samples
    assert got.dtype == np.float32
    assert got.tobytes() == want.tobytes()


def test_export_same_seed_same_bytes(dataset, tmp_path):
    a = export_calib(dataset, count=10, seed=7, out_path=tmp_path / "a.bin")
    b = export_calib(dataset, count=10, seed=7, out_path=tmp_path / "b.bin")
    assert a.read_bytes() == b.read_bytes()


def test_cli_count_and_header(tmp_path):
    rng = np.random.Generator(np.random.Philox(key=5))
    d = tmp_path / "data"
    d.mkdir()
    np.save(d / "pool.npy", rng.normal(size=(1200, 16)).astype(np.float32))
    runner = CliRunner()
    res = runner.invoke(export_calib_cmd, [
        "--dataset", str(d), "-n", "1024", "-k", "2", "--out", str(tmp_path),
    ])
    assert res.exit_code == 0, res.output
    calib = rdprune.load_calib(tmp_path / "calib.bin")
    assert calib.samples.shape == (1024, 16)


def test_cli_expect_shape_mismatch(dataset, tmp_path):
    runner = CliRunner()
    res = runner.invoke(export_calib_cmd, [
        "--dataset", str(dataset), "-n", "8",
        "--expect-shape", "1x8x8", "--out", str(tmp_path),
    ])
    assert res.exit_code == 2
    assert "shape" in res.output


def test_cli_count_too_large(dataset, tmp_path):
    runner = CliRunner()
    res = runner.invoke(export_calib_cmd, [
        "--dataset", str(dataset), "-n", "500", "--out", str(tmp_path),
    ])
    assert res.exit_code == 2

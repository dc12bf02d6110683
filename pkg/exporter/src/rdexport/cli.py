"""Command-line entry points: export-model and export-calib."""

import sys

import click

from .archs import ARCHS
from .calib import CalibExportError, export_calib
from .export import ExportError, export_model


def _shape(text):
    return tuple(int(d) for d in text.split("x"))


def _list_or_scalar(text):
    parts = [float(p) for p in text.split(",")]
    return parts[0] if len(parts) == 1 else parts


@click.command("export-model")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(),
              help="torch checkpoint (state_dict) for the chosen arch.")
@click.option("--arch", required=True, type=click.Choice(sorted(ARCHS)))
@click.option("--parity-seed", default=0, show_default=True,
              help="Seed for the 16 parity inputs.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def export_model_cmd(ckpt_path, arch, parity_seed, out_dir):
    """Convert a checkpoint to model.json/model.bin with batchnorm folded."""
    try:
        manifest = export_model(ckpt_path, arch, out_dir, parity_seed=parity_seed)
    except ExportError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except (OSError, ValueError, RuntimeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"exported {arch} ({manifest.source}) -> {out_dir}", err=True)
    click.echo(f"folds: {len(manifest.folds)}, layers mapped: {len(manifest.mapping)}",
               err=True)
    click.echo("parity: max relative deviation "
               f"{manifest.parity['max_rel_dev']:.3e} on "
               f"{manifest.parity['count']} inputs (tolerance "
               f"{manifest.parity['tolerance']})")


@click.command("export-calib")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(),
              help="Directory of .npy arrays, samples along axis 0.")
@click.option("--count", "-n", "count", required=True, type=int)
@click.option("--seed", "-k", "seed", default=0, show_default=True)
@click.option("--mean", default=None, help="Normalization mean (scalar or c1,c2,...).")
@click.option("--std", default=None, help="Normalization std (scalar or c1,c2,...).")
@click.option("--expect-shape", default=None, metavar="CxHxW",
              help="Reject datasets whose sample shape differs.")
@click.option("--out", "out_dir", required=True, type=click.Path(dir_okay=True))
def export_calib_cmd(dataset_dir, count, seed, mean, std, expect_shape, out_dir):
    """Select a seeded dataset slice and write calib.bin."""
    try:
        path = export_calib(
            dataset_dir, count, seed,
            out_path=f"{out_dir}/calib.bin",
            mean=None if mean is None else _list_or_scalar(mean),
            std=None if std is None else _list_or_scalar(std),
            expect_shape=None if expect_shape is None else _shape(expect_shape),
        )
    except CalibExportError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except (OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"calibration: {count} samples (seed {seed}) -> {path}", err=True)

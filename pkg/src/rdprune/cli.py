"""Command-line interface.

Subcommands cover the full pipeline: curve generation, budget allocation,
plan application, distortion evaluation, self-verification against the
brute-force reference, and the iterative schedule. All artifacts are
byte-deterministic for a fixed configuration and seed.

Exit codes: 0 success, 2 infeasible budget, 3 input or format problem,
4 oracle size guard. Set RDPRUNE_LOG=info or RDPRUNE_LOG=debug for
progress logging on stderr.
"""

from __future__ import annotations

import functools
import logging
import os
import sys
import time

import click
import numpy as np

from . import __version__
from .allocator import (
    BudgetSpec,
    allocate,
    allocate_ternary,
    iterative_schedule,
)
from .curves import SparsityGrid, WorkCounter, gen_all_curves
from .engine import forward, sq_error
from .errors import (
    EngineShapeError,
    FormatError,
    GuardSizeError,
    InfeasibleBudgetError,
    NotPrunableError,
)
from .io import (
    gen_white_noise_calib,
    load_calib,
    load_curves,
    load_model,
    load_plan,
    save_curves,
    save_dp_trace,
    save_model,
    save_plan,
)
from .oracle import (
    approximation_error_sweep,
    run_oracle_audit,
    save_additivity_csv,
    save_oracle_audit_csv,
)
from .pruning import apply_plan

log = logging.getLogger("rdprune")

_LOG_LEVELS = {
    "quiet": logging.WARNING, "warning": logging.WARNING, "0": logging.WARNING,
    "info": logging.INFO, "1": logging.INFO,
    "debug": logging.DEBUG, "2": logging.DEBUG,
}


def _setup_logging():
    raw = os.environ.get("RDPRUNE_LOG", "quiet").lower()
    logging.basicConfig(level=_LOG_LEVELS.get(raw, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _domain_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InfeasibleBudgetError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except GuardSizeError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(4)
        except (FormatError, EngineShapeError, NotPrunableError,
                OSError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
    return wrapper


def _calib_options(fn):
    fn = click.option("--calib", "calib_path", type=click.Path(), default=None,
                      help="Calibration sample file (calib.bin).")(fn)
    fn = click.option("--white-noise", "white_noise", default=None,
                      metavar="[SHAPE,]COUNT,SEED",
                      help="Standard-normal calibration instead of data; SHAPE "
                           "like 1x8x8, defaults to the model input shape.")(fn)
    return fn


def _load_calibration(model, calib_path, white_noise):
    if (calib_path is None) == (white_noise is None):
        raise ValueError("provide exactly one of --calib or --white-noise")
    if calib_path is not None:
        return load_calib(calib_path)
    parts = white_noise.split(",")
    if len(parts) == 2:
        shape = tuple(model.input_shape)
        count_s, seed_s = parts
    elif len(parts) == 3:
        shape = tuple(int(d) for d in parts[0].split("x"))
        count_s, seed_s = parts[1], parts[2]
    else:
        raise ValueError("--white-noise expects [SHAPE,]COUNT,SEED")
    return gen_white_noise_calib(shape, count=int(count_s), seed=int(seed_s))


def _infer_grid(curves):
    s = curves[0].points[-1].grid_index
    for c in curves:
        if c.points[-1].grid_index != s or len(c.points) != s + 1:
            raise FormatError("curve grids disagree across layers")
    return SparsityGrid(s)


@click.group()
@click.version_option(version=__version__, prog_name="rdprune")
def main():
    """Layer-adaptive pruning plans from rate-distortion curves."""
    _setup_logging()


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(),
              help="Model directory or model.json path.")
@_calib_options
@click.option("--grid", "grid_s", default=100, show_default=True,
              help="Number of sparsity steps S.")
@click.option("--mode", type=click.Choice(["mean", "worst"]), default="mean",
              show_default=True, help="Distortion aggregation over samples.")
@click.option("--filter/--no-filter", "apply_filter", default=True,
              show_default=True, help="Invalidate monotonicity-breaking points.")
@click.option("--threads", default=None, type=int,
              help="Worker threads for per-layer curves (default: executor choice).")
@click.option("--out", "out_dir", required=True, type=click.Path())
@_domain_errors
def curves(model_path, calib_path, white_noise, grid_s, mode, apply_filter,
           threads, out_dir):
    """Generate per-layer rate-distortion curves (curves.csv)."""
    model = load_model(model_path)
    calib = _load_calibration(model, calib_path, white_noise)
    grid = SparsityGrid(grid_s)
    counter = WorkCounter()
    log.info("generating curves for %d layers (grid=%d, mode=%s, calib=%s)",
             len(model.prunable_indices()), grid_s, mode, calib.source)
    t0 = time.perf_counter()
    result = gen_all_curves(model, grid, calib, mode=mode, threads=threads,
                            apply_filter=apply_filter, counter=counter)
    elapsed = time.perf_counter() - t0
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "curves.csv")
    save_curves(result, path)
    click.echo(f"curves: {len(result)} layers, grid {grid_s}, mode {mode} -> {path}",
               err=True)
    click.echo(f"curve time: {elapsed:.3f} s, forward pairs: {counter.value}", err=True)


@main.command("allocate")
@click.option("--curves", "curves_path", required=True, type=click.Path())
@click.option("--ratio", type=float, default=None,
              help="Fraction of prunable weights to zero, in [0, 1].")
@click.option("--budget", "budget_t", type=int, default=None,
              help="Absolute number of weights to prune (overrides --ratio).")
@click.option("--solver", type=click.Choice(["exhaustive", "ternary"]),
              default="exhaustive", show_default=True)
@click.option("--unit", type=int, default=None,
              help="Weights per budget bin (default keeps the table <= 10*l*S bins).")
@click.option("--bins", type=int, default=None,
              help="Target bin count; sets unit = ceil(T/bins).")
@click.option("--dp-trace/--no-dp-trace", default=False,
              help="Also dump the DP table (dp_trace.csv).")
@click.option("--out", "out_dir", required=True, type=click.Path())
@_domain_errors
def allocate_cmd(curves_path, ratio, budget_t, solver, unit, bins, dp_trace, out_dir):
    """Solve the budgeted allocation over saved curves (plan.json)."""
    curve_list = load_curves(curves_path)
    grid = _infer_grid(curve_list)
    total = sum(c.points[-1].pruned_count for c in curve_list)
    if (ratio is None) == (budget_t is None):
        raise ValueError("provide exactly one of --ratio or --budget")
    if ratio is not None:
        budget = BudgetSpec.from_ratio(ratio, total, len(curve_list), grid.s,
                                       unit=unit, bins=bins)
    else:
        budget = BudgetSpec.from_budget(budget_t, total, len(curve_list), grid.s,
                                        unit=unit, bins=bins)
    solve = allocate if solver == "exhaustive" else allocate_ternary
    t0 = time.perf_counter()
    plan, table = solve(curve_list, grid, budget)
    elapsed = time.perf_counter() - t0
    os.makedirs(out_dir, exist_ok=True)
    plan_path = os.path.join(out_dir, "plan.json")
    save_plan(plan, plan_path)
    if dp_trace:
        save_dp_trace(table, os.path.join(out_dir, "dp_trace.csv"))
    click.echo(f"plan: {len(plan.entries)} layers, budget {budget.t} "
               f"(unit {budget.unit}, {budget.b} bins) -> {plan_path}", err=True)
    click.echo("layer  grid_index  pruned/size  sparsity", err=True)
    for e in plan.entries:
        click.echo(f"{e.layer_index:5d}  {e.grid_index:10d}  "
                   f"{e.pruned_count}/{e.layer_size}  "
                   f"{e.pruned_count / e.layer_size:8.4f}", err=True)
    click.echo(f"allocation time: {elapsed:.3f} s, relaxations: {table.ops}")
    click.echo(f"objective: {plan.objective!r}, achieved {plan.achieved_total} "
               f"zeros (sparsity {plan.sparsity:.4f})")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--plan", "plan_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@_domain_errors
def prune(model_path, plan_path, out_dir):
    """Apply a plan's per-layer zero counts by weight magnitude."""
    model = load_model(model_path)
    plan = load_plan(plan_path)
    pruned = apply_plan(model, plan)
    os.makedirs(out_dir, exist_ok=True)
    save_model(pruned, out_dir)
    click.echo(f"pruned model: {plan.achieved_total}/{plan.total_prunable} zeros -> {out_dir}",
               err=True)


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--ref", "ref_path", type=click.Path(), default=None,
              help="Reference model (default: the model itself, distortion 0).")
@_calib_options
@click.option("--mode", type=click.Choice(["mean", "worst"]), default="mean",
              show_default=True)
@_domain_errors
def eval_cmd(model_path, ref_path, calib_path, white_noise, mode):
    """Measure output distortion of a model against a reference."""
    model = load_model(model_path)
    ref = load_model(ref_path) if ref_path is not None else model
    calib = _load_calibration(ref, calib_path, white_noise)
    errs = [sq_error(forward(ref, x), forward(model, x)) for x in calib]
    if mode == "worst":
        value = float(max(errs))
    else:
        value = float(np.sum(np.asarray(errs, dtype=np.float64)) / len(errs))
    click.echo(f"distortion ({mode}, {len(errs)} samples): {value!r}")


@main.command()
@click.option("--model", "model_path", type=click.Path(), default=None,
              help="Model for the additivity sweep (omit to audit the DP only).")
@_calib_options
@click.option("--instances", default=200, show_default=True,
              help="Random DP-vs-brute-force instances.")
@click.option("--seed", default=0, show_default=True)
@click.option("--mode", type=click.Choice(["mean", "worst"]), default="mean",
              show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@_domain_errors
def verify(model_path, calib_path, white_noise, instances, seed, mode, out_dir):
    """Audit the allocator against brute force; measure additivity."""
    os.makedirs(out_dir, exist_ok=True)
    rows = run_oracle_audit(n_instances=instances, seed=seed)
    save_oracle_audit_csv(rows, os.path.join(out_dir, "oracle_audit.csv"))
    bad = [r for r in rows if not r.exact_match]
    click.echo(f"oracle match: {'PASS' if not bad else 'FAIL'} "
               f"({len(rows) - len(bad)}/{len(rows)} instances)")

    if model_path is not None:
        model = load_model(model_path)
        calib = _load_calibration(model, calib_path, white_noise)
        records = approximation_error_sweep(model, calib, mode=mode)
        save_additivity_csv(records, os.path.join(out_dir, "additivity.csv"))
        joint = np.array([r.joint for r in records])
        summed = np.array([r.sum_individual for r in records])
        corr = float(np.corrcoef(joint, summed)[0, 1])
        click.echo(f"additivity: {len(records)} pairs, "
                   f"corr(joint, sum)={corr:.4f}")
    if bad:
        sys.exit(1)


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@_calib_options
@click.option("--rounds", default=5, show_default=True)
@click.option("--fraction", default=0.2, show_default=True,
              help="Per-round fraction of the remaining weights.")
@click.option("--grid", "grid_s", default=100, show_default=True)
@click.option("--mode", type=click.Choice(["mean", "worst"]), default="mean",
              show_default=True)
@click.option("--solver", type=click.Choice(["exhaustive", "ternary"]),
              default="exhaustive", show_default=True)
@click.option("--threads", default=None, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
@_domain_errors
def iterate(model_path, calib_path, white_noise, rounds, fraction, grid_s, mode,
            solver, threads, out_dir):
    """Iterative pruning: re-measure curves after each round."""
    model = load_model(model_path)
    calib = _load_calibration(model, calib_path, white_noise)
    grid = SparsityGrid(grid_s)
    t0 = time.perf_counter()
    steps = iterative_schedule(model, grid, calib, rounds, fraction,
                               mode=mode, threads=threads, solver=solver)
    elapsed = time.perf_counter() - t0
    os.makedirs(out_dir, exist_ok=True)
    final = None
    for r, (sparsity, plan, pruned) in enumerate(steps, start=1):
        save_plan(plan, os.path.join(out_dir, f"plan_round{r}.json"))
        click.echo(f"round {r}: sparsity {sparsity:.4f} "
                   f"({plan.achieved_total}/{plan.total_prunable} zeros)")
        final = pruned
    save_model(final, out_dir)
    click.echo(f"iterate time: {elapsed:.3f} s, final model -> {out_dir}", err=True)


if __name__ == "__main__":
    main()

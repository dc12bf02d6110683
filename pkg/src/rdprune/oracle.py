"""Independent checks of the allocator and its additivity assumption.

Two families live here. The brute-force solver re-derives an optimal plan by
enumerating every combination of valid curve points; it shares only the data
contract with the DP (bin arithmetic, cell selection, tie order) and none of
its code, so agreement is evidence rather than tautology. The additivity
measurements compare the true joint distortion of pruning several layers at
once against the sum of single-layer distortions, quantifying the
approximation the DP objective is built on.

Both sides accumulate objectives left to right over layers with plain float64
adds, the same order the DP rows use, so optimal objectives compare exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .allocator import AllocationPlan, BudgetSpec, PlanEntry, allocate
from .curves import RDCurve, RDPoint, SparsityGrid
from .engine import forward, sq_error
from .errors import GuardSizeError, InfeasibleBudgetError
from .pruning import prune_layer

MAX_ORACLE_LAYERS = 6
MAX_ORACLE_GRID = 10

_EPS = 1e-12


def brute_force_allocate(curves, grid: SparsityGrid, budget: BudgetSpec,
                         base_counts=None) -> AllocationPlan:
    """Exhaustive reference solver, deliberately independent of the DP.

    Enumerates all tuples of valid points, keeps the best per bin total
    (smaller objective wins, then lexicographically smaller grid indices
    from the last layer backwards, matching the DP's row-order tie rule),
    and reads the answer out of the same cell the DP would pick.
    """
    n_layers = len(curves)
    if n_layers == 0:
        raise InfeasibleBudgetError("empty curve set")
    if n_layers > MAX_ORACLE_LAYERS or grid.s > MAX_ORACLE_GRID:
        raise GuardSizeError(
            f"oracle limited to {MAX_ORACLE_LAYERS} layers and grid {MAX_ORACLE_GRID}, "
            f"got {n_layers} layers and grid {grid.s}"
        )
    if base_counts is None:
        base_counts = [0] * n_layers

    unit = budget.unit
    per_layer = []
    for curve, base in zip(curves, base_counts):
        pts = [p for p in curve.valid_points() if p.pruned_count >= base]
        if not pts or curve.points[0].grid_index != 0 or not curve.points[0].valid:
            raise InfeasibleBudgetError(
                f"layer {curve.layer_index}: unusable curve for base {base}"
            )
        rows = [(p.grid_index, p.pruned_count,
                 (2 * (p.pruned_count - base) + unit) // (2 * unit),
                 p.distortion) for p in pts]
        per_layer.append(rows)

    headroom = sum(max(r[1] for r in rows) - base
                   for rows, base in zip(per_layer, base_counts))
    if headroom < budget.t:
        raise InfeasibleBudgetError(
            f"budget {budget.t} exceeds prunable headroom {headroom} of the valid curve points"
        )

    best = {}  # bin total -> (objective, reversed grid tuple, picks)
    for picks in itertools.product(*per_layer):
        total_bins = sum(p[2] for p in picks)
        if total_bins > budget.b + n_layers:  # same overshoot room as the DP axis
            continue
        obj = 0.0
        for p in picks:
            obj = obj + p[3]
        key = (obj, tuple(p[0] for p in reversed(picks)))
        cur = best.get(total_bins)
        if cur is None or key < cur[0]:
            best[total_bins] = (key, picks)
    if not best:
        raise InfeasibleBudgetError("no reachable allocation state")

    b_star = min(best, key=lambda b: (abs(b - budget.b), -b))
    (obj, _), picks = best[b_star]

    entries = [
        PlanEntry(layer_index=c.layer_index, grid_index=p[0],
                  pruned_count=p[1], layer_size=c.points[-1].pruned_count)
        for c, p in zip(curves, picks)
    ]
    requested_total = budget.t + sum(int(b) for b in base_counts)
    plan = AllocationPlan(
        entries=entries,
        requested_budget=requested_total,
        unit=unit,
        bins=budget.b,
        total_prunable=budget.total_prunable,
        objective=obj,
        requested_ratio=budget.ratio,
    )
    if abs(plan.achieved_total - requested_total) > max(1, n_layers) * unit:
        raise InfeasibleBudgetError(
            f"grid too coarse: achieved {plan.achieved_total} deviates from "
            f"requested {requested_total} by more than {n_layers}*unit"
        )
    return plan


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class AdditivityRecord:
    """Joint vs summed single-layer distortion for one pruned layer set."""

    layers: tuple
    sparsity: float
    counts: tuple
    singles: tuple  # individual distortions, aligned with layers
    joint: float

    @property
    def sum_individual(self) -> float:
        total = 0.0
        for e in self.singles:
            total = total + e
        return total

    @property
    def relative_residual(self) -> float:
        return abs(self.joint - self.sum_individual) / max(self.joint, _EPS)


def _distortion_vs(ref_outs, pruned, calib, mode):
    errs = [sq_error(forward(pruned, x), ref) for x, ref in zip(calib, ref_outs)]
    if mode == "worst":
        return float(max(errs))
    return float(np.sum(np.asarray(errs, dtype=np.float64)) / len(errs))


def measure_additivity(model, layer_set, sparsity, calib, mode="mean",
                       counts=None, ref_outs=None) -> AdditivityRecord:
    """Measure E(joint) against the sum of single-layer E for one layer set.

    Per-layer pruned counts default to round(sparsity * n_i); pass ``counts``
    to pin them (e.g. to an allocation plan's). Unlike the curve generator,
    this path runs complete forwards per sample, so it also cross-checks the
    cached-prefix evaluation.
    """
    layers = [int(li) for li in layer_set]
    if len(set(layers)) != len(layers):
        raise ValueError("layer set contains duplicates")
    for li in layers:
        if not model.layers[li].prunable:
            raise ValueError(f"layer {li} is not prunable")
    if counts is None:
        counts = [_round_half_up(sparsity * model.layers[li].weight_count)
                  for li in layers]
    counts = [int(c) for c in counts]
    if ref_outs is None:
        ref_outs = [forward(model, x) for x in calib]

    singles = tuple(
        _distortion_vs(ref_outs, prune_layer(model, li, c), calib, mode)
        for li, c in zip(layers, counts)
    )
    joint_model = model
    for li, c in zip(layers, counts):
        joint_model = prune_layer(joint_model, li, c)
    joint = _distortion_vs(ref_outs, joint_model, calib, mode)
    return AdditivityRecord(layers=tuple(layers), sparsity=float(sparsity),
                            counts=tuple(counts), singles=singles, joint=joint)


def adjacent_pairs(model) -> list:
    prunable = model.prunable_indices()
    return list(zip(prunable, prunable[1:]))


def approximation_error_sweep(model, calib, sparsities=None, mode="mean"):
    """Additivity records over a sparsity ladder, all adjacent prunable pairs."""
    if sparsities is None:
        sparsities = [round(0.1 * k, 1) for k in range(1, 10)]
    pairs = adjacent_pairs(model)
    if not pairs:
        raise ValueError("need at least two prunable layers")
    ref_outs = [forward(model, x) for x in calib]
    records = []
    for s in sparsities:
        for pair in pairs:
            records.append(measure_additivity(model, pair, s, calib,
                                              mode=mode, ref_outs=ref_outs))
    return records


_ADDITIVITY_HEADER = ("sparsity,layers,counts,singles,"
                      "sum_individual,joint,relative_residual")


def save_additivity_csv(records, path):
    lines = [_ADDITIVITY_HEADER]
    for r in records:
        lines.append(",".join([
            repr(r.sparsity),
            ";".join(str(li) for li in r.layers),
            ";".join(str(c) for c in r.counts),
            ";".join(repr(e) for e in r.singles),
            repr(r.sum_individual), repr(r.joint), repr(r.relative_residual),
        ]))
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class AuditRow:
    instance: int
    layers: int
    grid_s: int
    budget_t: int
    unit: int
    dp_objective: float  # nan when infeasible
    oracle_objective: float
    exact_match: bool


def random_curve_instance(rng, max_layers=4, max_grid=8):
    """Synthetic monotone curves plus a budget hit by some valid tuple."""
    n_layers = int(rng.integers(1, max_layers + 1))
    s = int(rng.integers(2, max_grid + 1))
    grid = SparsityGrid(s)
    curves = []
    picks = []
    total = 0
    for i in range(n_layers):
        n = int(rng.integers(4, 41))
        total += n
        deltas = np.concatenate([[0.0], np.cumsum(rng.exponential(1.0, s))])
        if s >= 3 and rng.random() < 0.3:
            j = int(rng.integers(2, s))
            deltas[j] = deltas[j - 1]  # force a tie
        valid = np.ones(s + 1, dtype=bool)
        for j in range(1, s):
            if rng.random() < 0.2:
                valid[j] = False
        points = [RDPoint(grid_index=j, pruned_count=grid.count(n, j),
                          distortion=float(deltas[j]), valid=bool(valid[j]))
                  for j in range(s + 1)]
        curves.append(RDCurve(layer_index=i, points=points))
        valid_js = [j for j in range(s + 1) if valid[j]]
        picks.append(grid.count(n, int(rng.choice(valid_js))))
    t = sum(picks)
    unit = 1 if rng.random() < 0.7 else int(rng.integers(2, 4))
    budget = BudgetSpec.from_budget(t, total, n_layers, s, unit=unit)
    return curves, grid, budget


def run_oracle_audit(n_instances=200, seed=0, max_layers=4, max_grid=8):
    """Random DP-vs-brute-force comparisons; exact objective and plan match."""
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    rows = []
    for k in range(n_instances):
        curves, grid, budget = random_curve_instance(rng, max_layers, max_grid)
        dp_obj = math.nan
        bf_obj = math.nan
        dp_plan = bf_plan = None
        try:
            dp_plan, _ = allocate(curves, grid, budget)
            dp_obj = dp_plan.objective
        except InfeasibleBudgetError:
            pass
        try:
            bf_plan = brute_force_allocate(curves, grid, budget)
            bf_obj = bf_plan.objective
        except InfeasibleBudgetError:
            pass
        if dp_plan is None or bf_plan is None:
            match = dp_plan is None and bf_plan is None
        else:
            match = dp_obj == bf_obj and dp_plan.entries == bf_plan.entries
        rows.append(AuditRow(
            instance=k, layers=len(curves), grid_s=grid.s,
            budget_t=budget.t, unit=budget.unit,
            dp_objective=dp_obj, oracle_objective=bf_obj,
            exact_match=bool(match),
        ))
    return rows


_AUDIT_HEADER = "instance,layers,grid_s,budget_t,unit,dp_objective,oracle_objective,exact_match"


def save_oracle_audit_csv(rows, path):
    lines = [_AUDIT_HEADER]
    for r in rows:
        lines.append(",".join([
            str(r.instance), str(r.layers), str(r.grid_s),
            str(r.budget_t), str(r.unit),
            repr(r.dp_objective), repr(r.oracle_objective),
            "1" if r.exact_match else "0",
        ]))
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write("\n".join(lines) + "\n")

"""Global sparsity allocation by dynamic programming.

Minimizes the sum of per-layer curve distortions subject to a total
pruned-weight budget, exploiting the additivity of single-layer distortions.
State g[i][b] is the minimal cumulative distortion when the first i prunable
layers consume exactly b budget bins; s[i][b] records the chosen grid index
for backtracking. Rows are filled bottom-up with the recursion

    g[i][b] = min over valid points j of  g[i-1][b - bins_i(j)] + delta_i(j)

The budget axis is quantized: a bin is ``unit`` weights and layer choice j
consumes round(count_i(j)/unit) bins. The axis runs one bin per layer past
the target so the answer cell may overshoot when the grid has no nearby
total below it. The default unit keeps the table at most 10*l*S bins wide
so the fill stays O(l*B*S) regardless of model size (unit=1 indexes
individual weights). Quantization deviation is bounded by one unit per
layer and reported in the plan.

Choices are relaxed in ascending pruned-count order with strict-less
updates, so ties resolve to the smallest count. Filtered-out curve points
never enter the minimization. Unreachable states carry +inf and decision -1.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .curves import SparsityGrid, gen_all_curves
from .errors import InfeasibleBudgetError
from .pruning import apply_plan, zero_counts


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class BudgetSpec:
    """Pruning budget: t weights to prune, quantized into b bins of ``unit``."""

    t: int
    unit: int
    b: int
    total_prunable: int
    ratio: float | None = None

    def __post_init__(self):
        if not 0 <= self.t <= self.total_prunable:
            raise InfeasibleBudgetError(
                f"budget {self.t} outside [0, {self.total_prunable}]"
            )
        if self.unit < 1 or self.b * self.unit < self.t:
            raise ValueError("bin quantum must be >= 1 and cover the budget")

    @classmethod
    def from_budget(cls, t, total_prunable, n_layers, grid_s,
                    unit=None, bins=None, ratio=None) -> "BudgetSpec":
        t = int(t)
        if unit is None:
            if bins is not None:
                unit = max(1, math.ceil(t / int(bins))) if t > 0 else 1
            else:
                # default: table width capped at 10*l*S bins
                unit = max(1, math.ceil(t / (10 * max(1, n_layers) * max(1, grid_s))))
        b = math.ceil(t / unit)
        return cls(t=t, unit=int(unit), b=int(b), total_prunable=int(total_prunable), ratio=ratio)

    @classmethod
    def from_ratio(cls, ratio, total_prunable, n_layers, grid_s,
                   unit=None, bins=None) -> "BudgetSpec":
        if not 0.0 <= ratio <= 1.0:
            raise ValueError(f"pruning ratio {ratio} outside [0, 1]")
        t = _round_half_up(ratio * total_prunable)
        return cls.from_budget(t, total_prunable, n_layers, grid_s,
                               unit=unit, bins=bins, ratio=float(ratio))


@dataclass(frozen=True)
class PlanEntry:
    layer_index: int
    grid_index: int
    pruned_count: int
    layer_size: int


@dataclass
class AllocationPlan:
    entries: list
    requested_budget: int  # absolute zero count targeted (base + allocated)
    unit: int
    bins: int
    total_prunable: int
    objective: float
    requested_ratio: float | None = None

    @property
    def achieved_total(self) -> int:
        return sum(e.pruned_count for e in self.entries)

    @property
    def sparsity(self) -> float:
        return self.achieved_total / self.total_prunable


@dataclass
class DPTable:
    g: np.ndarray  # (l+1, B+1) float64, +inf = unreachable
    s: np.ndarray  # (l+1, B+1) int32 grid index, -1 = unreachable
    unit: int
    b_star: int  # answer cell the plan was backtracked from
    ops: int  # inner-loop relaxations performed


class _LayerChoices:
    """Valid curve points of one layer as parallel arrays, ascending count."""

    def __init__(self, curve, base: int, unit: int):
        pts = [p for p in curve.valid_points() if p.pruned_count >= base]
        if not pts:
            raise InfeasibleBudgetError(
                f"layer {curve.layer_index}: no valid curve point at or above "
                f"current zero count {base}"
            )
        self.layer_index = curve.layer_index
        self.grid_idx = np.array([p.grid_index for p in pts], dtype=np.int32)
        self.counts = np.array([p.pruned_count for p in pts], dtype=np.int64)
        self.deltas = np.array([p.distortion for p in pts], dtype=np.float64)
        consumed = self.counts - base
        self.bins = (2 * consumed + unit) // (2 * unit)  # round-half-up
        self.layer_size = int(curve.points[-1].pruned_count)

    def by_grid_index(self, j: int) -> int:
        pos = int(np.searchsorted(self.grid_idx, j))
        assert self.grid_idx[pos] == j
        return pos


def _build_choices(curves, budget, base_counts):
    layers = []
    for curve, base in zip(curves, base_counts):
        first = curve.points[0]
        if first.grid_index != 0 or not first.valid:
            raise InfeasibleBudgetError(
                f"layer {curve.layer_index}: curve lacks a valid j=0 point"
            )
        layers.append(_LayerChoices(curve, int(base), budget.unit))
    return layers


def _pick_cell(g_last, target_b):
    reachable = np.nonzero(np.isfinite(g_last))[0]
    if reachable.size == 0:
        raise InfeasibleBudgetError("no reachable allocation state")
    if target_b < len(g_last) and np.isfinite(g_last[target_b]):
        return int(target_b)
    # nearest reachable cell; prefer pruning more when equidistant
    order = sorted(reachable.tolist(), key=lambda b: (abs(b - target_b), -b))
    return int(order[0])


def _solve(curves, grid: SparsityGrid, budget: BudgetSpec, base_counts, solver):
    if not curves:
        raise InfeasibleBudgetError("empty curve set")
    n_layers = len(curves)
    if base_counts is None:
        base_counts = [0] * n_layers
    layers = _build_choices(curves, budget, base_counts)

    headroom = sum(max(0, int(lc.counts.max()) - b) for lc, b in zip(layers, base_counts))
    if headroom < budget.t:
        raise InfeasibleBudgetError(
            f"budget {budget.t} exceeds prunable headroom {headroom} of the valid curve points"
        )

    # one extra bin per layer past the target so the plan can overshoot
    # toward a nearer grid point; the deviation guard below still caps the
    # result at l*unit either side of the request
    n_cells = budget.b + n_layers + 1
    g = np.full((n_layers + 1, n_cells), np.inf, dtype=np.float64)
    s = np.full((n_layers + 1, n_cells), -1, dtype=np.int32)
    g[0, 0] = 0.0

    relax = _kernels.dp_relax_row if solver == "exhaustive" else _kernels.dp_relax_row_ternary
    ops = 0
    for i, lc in enumerate(layers, start=1):
        g[i], s[i], row_ops = relax(g[i - 1], lc.bins, lc.deltas, lc.grid_idx)
        ops += int(row_ops)

    b_star = _pick_cell(g[n_layers], budget.b)

    entries = []
    b = b_star
    for i in range(n_layers, 0, -1):
        lc = layers[i - 1]
        j = int(s[i, b])
        if j < 0:
            raise InfeasibleBudgetError("backtracking hit an unreachable state")
        pos = lc.by_grid_index(j)
        entries.append(PlanEntry(
            layer_index=lc.layer_index,
            grid_index=j,
            pruned_count=int(lc.counts[pos]),
            layer_size=lc.layer_size,
        ))
        b -= int(lc.bins[pos])
    assert b == 0, "backtracking did not consume the full cell"
    entries.reverse()

    requested_total = budget.t + sum(int(b) for b in base_counts)
    plan = AllocationPlan(
        entries=entries,
        requested_budget=requested_total,
        unit=budget.unit,
        bins=budget.b,
        total_prunable=budget.total_prunable,
        objective=float(g[n_layers, b_star]),
        requested_ratio=budget.ratio,
    )
    if abs(plan.achieved_total - requested_total) > max(1, n_layers) * budget.unit:
        raise InfeasibleBudgetError(
            f"grid too coarse: achieved {plan.achieved_total} deviates from "
            f"requested {requested_total} by more than {n_layers}*unit"
        )
    table = DPTable(g=g, s=s, unit=budget.unit, b_star=b_star, ops=ops)
    return plan, table


def allocate(curves, grid: SparsityGrid, budget: BudgetSpec, base_counts=None):
    """Optimal allocation via the exhaustive-inner-loop DP (correctness reference)."""
    return _solve(curves, grid, budget, base_counts, "exhaustive")


def allocate_ternary(curves, grid: SparsityGrid, budget: BudgetSpec, base_counts=None):
    """Ternary-search inner loop; exact when the inner objective is strictly unimodal."""
    return _solve(curves, grid, budget, base_counts, "ternary")


def uniform_plan(curves, grid: SparsityGrid, budget: BudgetSpec) -> AllocationPlan:
    """Same grid index for every layer, nearest to the budget (baseline).

    Only indices valid in every layer are considered, so the result is always
    a feasible point of the DP run at its own achieved budget.
    """
    valid_sets = [set(p.grid_index for p in c.valid_points()) for c in curves]
    shared = sorted(set.intersection(*valid_sets))
    sizes = [c.points[-1].pruned_count for c in curves]
    totals = {j: sum(grid.count(n, j) for n in sizes) for j in shared}
    j_u = min(shared, key=lambda j: (abs(totals[j] - budget.t), j))
    entries = []
    objective = 0.0
    for curve, n in zip(curves, sizes):
        pos = [p for p in curve.points if p.grid_index == j_u][0]
        entries.append(PlanEntry(
            layer_index=curve.layer_index,
            grid_index=j_u,
            pruned_count=pos.pruned_count,
            layer_size=n,
        ))
        objective += pos.distortion
    return AllocationPlan(
        entries=entries,
        requested_budget=budget.t,
        unit=budget.unit,
        bins=budget.b,
        total_prunable=budget.total_prunable,
        objective=objective,
        requested_ratio=budget.ratio,
    )


def iterative_schedule(model, grid: SparsityGrid, calib, rounds: int,
                       per_round_fraction: float, mode="mean", threads=None,
                       unit=None, solver="exhaustive"):
    """Iterative pruning without retraining.

    Each round regenerates curves on the current pruned model and allocates
    enough extra zeros to reach cumulative sparsity 1 - (1-f)^r. Returns a
    list of (sparsity, AllocationPlan, pruned ModelGraph) per round.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if not 0.0 < per_round_fraction < 1.0:
        raise ValueError("per-round fraction must be in (0, 1)")
    current = model.copy()
    total = current.total_prunable
    results = []
    solve = allocate if solver == "exhaustive" else allocate_ternary
    for r in range(1, rounds + 1):
        target_cum = _round_half_up((1.0 - (1.0 - per_round_fraction) ** r) * total)
        base = zero_counts(current)
        increment = max(0, target_cum - sum(base))
        curves = gen_all_curves(current, grid, calib, mode=mode, threads=threads)
        budget = BudgetSpec.from_budget(increment, total, len(curves), grid.s, unit=unit)
        try:
            plan, _ = solve(curves, grid, budget, base_counts=base)
        except InfeasibleBudgetError as exc:
            raise InfeasibleBudgetError(f"round {r}: {exc}") from exc
        current = apply_plan(current, plan)
        results.append((plan.sparsity, plan, current))
    return results

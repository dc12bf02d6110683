"""Layer-adaptive unstructured pruning via rate-distortion curves.

Measures, per layer, how output distortion grows with the number of zeroed
weights, then splits a global pruning budget across layers with a dynamic
program that minimizes the summed distortion. Hot kernels run through a
compiled extension when available (see rdprune._kernels.BACKEND).
"""

from ._kernels import BACKEND as kernel_backend
from .allocator import (
    AllocationPlan,
    BudgetSpec,
    DPTable,
    PlanEntry,
    allocate,
    allocate_ternary,
    iterative_schedule,
    uniform_plan,
)
from .curves import (
    RDCurve,
    RDPoint,
    SparsityGrid,
    WorkCounter,
    filter_outliers,
    gen_all_curves,
    gen_curve,
)
from .engine import forward, forward_collect, forward_from, output_sq_error, sq_error
from .errors import (
    ChecksumError,
    EngineShapeError,
    FormatError,
    GuardSizeError,
    InfeasibleBudgetError,
    NotPrunableError,
    RDPruneError,
    ShapeInconsistencyError,
    UnknownLayerKindError,
)
from .graph import LayerSpec, ModelGraph
from .io import (
    CalibrationSet,
    gen_white_noise_calib,
    load_calib,
    load_curves,
    load_model,
    load_plan,
    save_calib,
    save_curves,
    save_model,
    save_plan,
)
from .oracle import (
    AdditivityRecord,
    adjacent_pairs,
    approximation_error_sweep,
    brute_force_allocate,
    measure_additivity,
    run_oracle_audit,
)
from .pruning import PruneMask, apply_plan, magnitude_order, prune_layer, prune_mask, zero_counts

__version__ = "0.1.0"

__all__ = [
    "AdditivityRecord",
    "AllocationPlan",
    "BudgetSpec",
    "CalibrationSet",
    "ChecksumError",
    "DPTable",
    "EngineShapeError",
    "FormatError",
    "GuardSizeError",
    "InfeasibleBudgetError",
    "LayerSpec",
    "ModelGraph",
    "NotPrunableError",
    "PlanEntry",
    "PruneMask",
    "RDCurve",
    "RDPoint",
    "RDPruneError",
    "ShapeInconsistencyError",
    "SparsityGrid",
    "UnknownLayerKindError",
    "WorkCounter",
    "adjacent_pairs",
    "allocate",
    "allocate_ternary",
    "apply_plan",
    "approximation_error_sweep",
    "brute_force_allocate",
    "filter_outliers",
    "forward",
    "forward_collect",
    "forward_from",
    "gen_all_curves",
    "gen_curve",
    "gen_white_noise_calib",
    "iterative_schedule",
    "kernel_backend",
    "load_calib",
    "load_curves",
    "load_model",
    "load_plan",
    "magnitude_order",
    "measure_additivity",
    "output_sq_error",
    "prune_layer",
    "prune_mask",
    "run_oracle_audit",
    "save_calib",
    "save_curves",
    "save_model",
    "save_plan",
    "sq_error",
    "uniform_plan",
    "zero_counts",
    "__version__",
]

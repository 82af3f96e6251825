"""Gradient-free matrix optimization toolkit.

Estimate gradients from function queries alone, project the estimation into
a low-dimensional subspace to cut its variance, and orthogonalize the
projected estimate before lifting it back for spectrally uniform updates.
Ships with full-space and low-rank baselines, analytic benchmark objectives,
an independent verification oracle, and a seeded experiment harness.
"""

from .estimators import (
    CENTRAL,
    FORWARD,
    EstimatorConfig,
    GradEstimate,
    lge_lozo,
    rge_full,
    subspace_rge,
)
from .linalg import (
    NumericalError,
    Projection,
    SpectralSummary,
    effective_rank,
    msign_ns,
    msign_svd,
    sample_projection,
    spectral_summary,
)
from .objectives import (
    EvaluationError,
    Objective,
    make_logreg,
    make_logreg_from_csv,
    make_mlp,
    make_quadratic,
)
from .optimizers import (
    LOZO,
    MEZO,
    OPTIMIZER_KINDS,
    SUBSPACE_MEZO,
    ZO_MUON,
    ZO_SGD,
    OptimizerConfig,
    OptimizerState,
    RunResult,
    StepRecord,
    run,
    steps_for_budget,
)
from .params import MATRIX, VECTOR, ParamPartition, ParamSpace, partition

__version__ = "0.1.0"

__all__ = [
    "CENTRAL",
    "FORWARD",
    "LOZO",
    "MATRIX",
    "MEZO",
    "OPTIMIZER_KINDS",
    "SUBSPACE_MEZO",
    "VECTOR",
    "ZO_MUON",
    "ZO_SGD",
    "EstimatorConfig",
    "EvaluationError",
    "GradEstimate",
    "NumericalError",
    "Objective",
    "OptimizerConfig",
    "OptimizerState",
    "ParamPartition",
    "ParamSpace",
    "Projection",
    "RunResult",
    "SpectralSummary",
    "StepRecord",
    "effective_rank",
    "lge_lozo",
    "make_logreg",
    "make_logreg_from_csv",
    "make_mlp",
    "make_quadratic",
    "msign_ns",
    "msign_svd",
    "partition",
    "rge_full",
    "run",
    "sample_projection",
    "spectral_summary",
    "steps_for_budget",
    "subspace_rge",
]

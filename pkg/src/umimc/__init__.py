"""Unbiased multi-index Monte Carlo estimation with randomized truncation."""

from .estimators import (
    DrawResult,
    EstimatorKind,
    IncrementMomentTable,
    RunningEstimate,
    draw_coupled,
    draw_diagonal_coupled,
    draw_diagonal_independent,
    draw_independent,
    estimate_moment_tables,
    run_adaptive,
    second_moment_coupled,
    second_moment_diagonal_coupled,
    second_moment_diagonal_independent,
)
from .lattice import IndexBox, enumerate_box, join, meet, partial_le, signed_corners
from .models import CornerValues, Model, SyntheticProductModel
from .optimizer import objective_g_prime, optimal_sequence, unconstrained_optimum
from .tails import (
    DiagonalEmpirical,
    DiagonalGeometric,
    DiagonalTruncated,
    ProductGeometric,
    TailDistribution,
    from_optimal_sequence,
    tail_from_config,
)

__all__ = [
    "CornerValues",
    "DiagonalEmpirical",
    "DiagonalGeometric",
    "DiagonalTruncated",
    "DrawResult",
    "EstimatorKind",
    "IncrementMomentTable",
    "IndexBox",
    "Model",
    "ProductGeometric",
    "RunningEstimate",
    "SyntheticProductModel",
    "TailDistribution",
    "draw_coupled",
    "draw_diagonal_coupled",
    "draw_diagonal_independent",
    "draw_independent",
    "enumerate_box",
    "estimate_moment_tables",
    "from_optimal_sequence",
    "join",
    "meet",
    "objective_g_prime",
    "optimal_sequence",
    "partial_le",
    "run_adaptive",
    "second_moment_coupled",
    "second_moment_diagonal_coupled",
    "second_moment_diagonal_independent",
    "signed_corners",
    "tail_from_config",
    "unconstrained_optimum",
]

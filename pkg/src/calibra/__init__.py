"""Calibrated CTR signaling for Bayesian click-through auctions.

A library and CLI for computing, auditing, and simulating revenue-optimal
calibrated signaling schemes: a discretized linear program for general
two-bidder environments and a closed-form geometric construction with a
worst-case guarantee for symmetric ones.
"""

from .distributions import (
    DistributionError,
    DomainError,
    ValueDistribution,
    exponential,
    from_spec,
    polynomial,
    tabulated,
    to_spec,
    uniform,
)
from .fptas import (
    SignalGrid,
    build_grid,
    build_lp,
    fptas_solve,
    fptas_solve_reserve,
    round_and_repair,
)
from .quad import QuadratureError, adaptive_simpson, default_tol
from .ratio import (
    BoundReport,
    ConvexityError,
    RatioAnalysis,
    inverse_ratio,
    optimal_ratio,
    revenue_ratio_slope,
)
from .revenue import (
    CtrPrior,
    PriorError,
    expected_revenue_reserve,
    expected_revenue_two,
    expected_revenue_uniform_ratio,
    mc_expected_revenue,
)
from .schemes import (
    ConstructionReport,
    SchemeError,
    SignalingScheme,
    SymmetricConstruction,
    calibration_residuals,
    construct_simple,
    construct_symmetric,
    construct_symmetric_detailed,
    full_revelation_scheme,
    no_information_scheme,
    scheme_from_records,
    scheme_revenue,
    scheme_to_records,
)
from .simplex import IterationLimitError, LpProblem, LpSolution, solve_lp
from .simulator import (
    RoundOutcome,
    SimulationConfig,
    empirical_calibration,
    estimate_revenue,
    run_round,
)

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "ConstructionReport",
    "ConvexityError",
    "CtrPrior",
    "DistributionError",
    "DomainError",
    "IterationLimitError",
    "LpProblem",
    "LpSolution",
    "PriorError",
    "QuadratureError",
    "RatioAnalysis",
    "RoundOutcome",
    "SchemeError",
    "SignalGrid",
    "SignalingScheme",
    "SimulationConfig",
    "SymmetricConstruction",
    "ValueDistribution",
    "adaptive_simpson",
    "build_grid",
    "build_lp",
    "calibration_residuals",
    "construct_simple",
    "construct_symmetric",
    "construct_symmetric_detailed",
    "default_tol",
    "empirical_calibration",
    "estimate_revenue",
    "exponential",
    "expected_revenue_reserve",
    "expected_revenue_two",
    "expected_revenue_uniform_ratio",
    "fptas_solve",
    "fptas_solve_reserve",
    "from_spec",
    "full_revelation_scheme",
    "inverse_ratio",
    "mc_expected_revenue",
    "no_information_scheme",
    "optimal_ratio",
    "polynomial",
    "revenue_ratio_slope",
    "round_and_repair",
    "run_round",
    "scheme_from_records",
    "scheme_revenue",
    "scheme_to_records",
    "solve_lp",
    "tabulated",
    "to_spec",
    "uniform",
]

"""Semi-Lagrangian schemes for first-order mean field games.

The public surface re-exports the grid and problem builders, the three
fixed-point solvers, the analytic LQ reference and the estimator wrappers.
"""

from .estimators import ADLVISolver, DLVISolver, DPISolver
from .fixedpoint import (
    FixedPointResult,
    SolveDiagnostics,
    SolverConfig,
    adlvi,
    dlvi,
    dpi,
    err_density,
    err_density_analytic,
    err_value,
    prolong_density,
)
from .grid import GridSpec, extend_density, extend_value, interpolate, project_initial_density, q1_weights
from .hjb import ControlBoxWarning, evaluate_policy_value, hjb_step, minimize_cell, solve_backward
from .oracle import LQSolution, exact_density, exact_value, lq_solve, residual_check
from .problem import MFGProblem, ProblemConfig, lq_gaussian, target_aversion_1d, target_aversion_2d
from .transport import ce_step, cost_functional, solve_forward

__version__ = "0.1.0"

__all__ = [
    "ADLVISolver", "DLVISolver", "DPISolver", "FixedPointResult", "SolveDiagnostics", "SolverConfig",
    "adlvi", "dlvi", "dpi", "err_density", "err_density_analytic", "err_value", "prolong_density",
    "GridSpec", "extend_density", "extend_value", "interpolate", "project_initial_density", "q1_weights",
    "ControlBoxWarning", "evaluate_policy_value", "hjb_step", "minimize_cell", "solve_backward",
    "LQSolution", "exact_density", "exact_value", "lq_solve", "residual_check",
    "MFGProblem", "ProblemConfig", "lq_gaussian", "target_aversion_1d", "target_aversion_2d",
    "ce_step", "cost_functional", "solve_forward",
]

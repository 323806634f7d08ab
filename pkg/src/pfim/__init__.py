"""Periodic solutions of nonlinear and non-smooth systems by perturbation
function iteration with piecewise-constant exact propagation."""

__version__ = "0.1.0"

from .benchmarks import CATALOG, initial_guess, linear_part, make_system
from .continuation import (
    BranchPoint,
    ContinuationConfig,
    branch_to_records,
    continue_branch,
    floquet,
    phase_continuation,
)
from .errors import *  # noqa: F401,F403
from .linalg import eigenvalues, exp_and_phi1, mat_exp, phi1, solve_dense
from .pfim import (
    IntervalOperators,
    PfimConfig,
    PfimResult,
    PhaseCondition,
    build_interval_operators,
    build_linearization,
    linear_periodic_solution,
    operators_at,
    pfim_solve,
    phase_autonomous,
    phase_forced,
    propagate_correction,
    solve_boundary,
)
from .reference import (
    FourierSolution,
    HbmConfig,
    ShootingConfig,
    ShootingSolution,
    hbm_solve,
    rk4_flow,
    shooting_solve,
    shooting_trajectory,
    steady_state_reference,
)
from .system import PeriodicTrajectory, SystemModel, grid_derivative, residual

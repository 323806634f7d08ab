"""Perturbation function iteration with piecewise-constant exact propagation.

One correction step linearises the periodic residual about the current
trajectory, freezes the linear time-varying coefficients on every grid
interval, propagates exactly with matrix exponentials, closes the periodic
boundary problem with a phase row and adds the resulting correction.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from .errors import (
    BoundarySingularError,
    DegeneratePhaseError,
    DimensionError,
    DomainError,
    PropagationError,
    SingularSystemError,
)
from .linalg import exp_and_phi1, solve_dense
from .system import (
    PeriodicTrajectory,
    average_error,
    grid_derivative,
    mean_residual_norm,
    relative_update,
    residual,
)

__all__ = [
    "PeriodicTrajectory",
    "IntervalOperators",
    "PhaseCondition",
    "PfimConfig",
    "IterationRecord",
    "PfimResult",
    "build_linearization",
    "build_interval_operators",
    "phase_forced",
    "phase_autonomous",
    "solve_boundary",
    "propagate_correction",
    "pfim_solve",
    "linear_periodic_solution",
]

_CHUNK = 64


@dataclass
class IntervalOperators:
    """Per-interval propagators and their whole-period composites."""

    phi: np.ndarray  # (n_p, N, N)
    gamma: np.ndarray  # (n_p, N)
    pi: np.ndarray  # (n_p, N)
    phi_total: np.ndarray
    gamma_total: np.ndarray
    pi_total: np.ndarray

    @property
    def n_p(self):
        return self.phi.shape[0]

    @property
    def dim(self):
        return self.phi.shape[1]


@dataclass
class PhaseCondition:
    """Bordering row ``upsilon . [dx(0); domega] = xi``."""

    upsilon: np.ndarray
    xi: float
    kind: str

    def __post_init__(self):
        self.upsilon = np.asarray(self.upsilon, dtype=float)
        if not np.any(self.upsilon != 0.0):
            raise DegeneratePhaseError("phase row is identically zero")


@dataclass
class PfimConfig:
    n_p: int = 4096
    tol_a: float = 1e-10
    tol_r: float = 1e-12
    max_iter: int = 50
    record_history: bool = True
    # "mean_norm" averages nodal residual norms; "vector_mean" is the norm of
    # the averaged residual vector, which can vanish for large residuals.
    residual_metric: str = "mean_norm"
    divergence_factor: float = 1e6
    # stop once the residual metric has not improved on its best value for
    # this many consecutive iterations; the best iterate is returned
    stall_patience: int = 3

    def __post_init__(self):
        if not (self.tol_a > 0 and self.tol_r > 0):
            raise DomainError("tolerances must be positive")
        if self.n_p < 8:
            raise DomainError("n_p must be at least 8")
        if self.max_iter < 1:
            raise DomainError("max_iter must be at least 1")
        if self.stall_patience < 1:
            raise DomainError("stall_patience must be at least 1")
        if self.residual_metric not in ("mean_norm", "vector_mean"):
            raise DomainError(f"unknown residual metric {self.residual_metric!r}")


@dataclass
class IterationRecord:
    iteration: int
    e_a: float
    e_r: float
    omega: float
    residual_norm: float
    residual_max: float
    nu: float = 0.0
    phase_residual: float = 0.0
    closure: float = 0.0


@dataclass
class PfimResult:
    trajectory: PeriodicTrajectory
    iterations: int
    converged: bool
    history: List[IterationRecord] = field(default_factory=list)
    final_operators: Optional[IntervalOperators] = None
    message: str = ""

    @property
    def omega(self):
        return self.trajectory.omega


def build_linearization(sys, traj, dx=None, R=None):
    """Nodal coefficients of the correction equation ``mu' = Q mu + P + F nu``.

    Returns arrays ``Q (n_p+1, N, N)``, ``P (n_p+1, N)``, ``F (n_p+1, N)``.
    """
    omega = traj.omega
    if not omega > 0:
        raise DomainError("omega must be positive")
    if dx is None:
        dx = grid_derivative(traj)
    if R is None:
        R = residual(sys, traj, dx)
    J = sys.jac(traj.samples[:-1], traj.tau[:-1], omega)
    Q = np.concatenate([J, J[:1]]) / omega
    return Q, R / omega, -dx / omega


def build_interval_operators(nodes, dt):
    """Exact propagators of the frozen-coefficient system on each interval."""
    Q, P, F = nodes
    n = Q.shape[0] - 1
    if P.shape[0] != n + 1 or F.shape[0] != n + 1:
        raise DimensionError("nodal arrays must share the node count")
    N = Q.shape[-1]
    phi = np.empty((n, N, N))
    gamma = np.empty((n, N))
    pi = np.empty((n, N))
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        Qi = 0.5 * (Q[start:stop] + Q[start + 1 : stop + 1])
        Pi = 0.5 * (P[start:stop] + P[start + 1 : stop + 1])
        Fi = 0.5 * (F[start:stop] + F[start + 1 : stop + 1])
        E, W = exp_and_phi1(Qi, dt)
        phi[start:stop] = E
        gamma[start:stop] = np.einsum("kij,kj->ki", W, Pi)
        pi[start:stop] = np.einsum("kij,kj->ki", W, Fi)

    # [Phi | Gamma | Pi] composed left to right over the period
    acc = np.zeros((N, N + 2))
    acc[:, :N] = np.eye(N)
    for i in range(n):
        acc = phi[i] @ acc
        acc[:, N] += gamma[i]
        acc[:, N + 1] += pi[i]
    return IntervalOperators(
        phi=phi,
        gamma=gamma,
        pi=pi,
        phi_total=acc[:, :N].copy(),
        gamma_total=acc[:, N].copy(),
        pi_total=acc[:, N + 1].copy(),
    )


def phase_forced(dim):
    """``domega = 0``: the frequency is imposed by the excitation."""
    ups = np.zeros(dim + 1)
    ups[-1] = 1.0
    return PhaseCondition(ups, 0.0, "forced")


def phase_autonomous(traj, dx=None):
    """Correction at ``tau = 0`` orthogonal to the orbit tangent."""
    if dx is None:
        dx = grid_derivative(traj)
    tangent = dx[0]
    if np.linalg.norm(tangent) < 1e-12:
        raise DegeneratePhaseError("trajectory is stationary at tau = 0")
    return PhaseCondition(np.append(tangent, 0.0), 0.0, "autonomous")


def solve_boundary(ops, pc, iteration=None):
    """Solve the bordered periodicity system for ``(dx(0), domega)``."""
    N = ops.dim
    if pc.upsilon.shape != (N + 1,):
        raise DimensionError(f"phase row must have {N + 1} entries")
    A = np.zeros((N + 1, N + 1))
    A[:N, :N] = np.eye(N) - ops.phi_total
    A[:N, N] = -ops.pi_total
    A[N] = pc.upsilon
    b = np.append(ops.gamma_total, pc.xi)
    try:
        sol = solve_dense(A, b)
    except SingularSystemError as exc:
        where = "" if iteration is None else f" at iteration {iteration}"
        raise BoundarySingularError(
            f"bordered boundary system is singular{where} (pivot {exc.pivot_index})", iteration
        ) from exc
    return sol[:N], float(sol[N])


def propagate_correction(ops, mu0, nu, return_closure=False):
    """Nodal corrections from the interval recursion, starting at ``mu0``."""
    n, N = ops.n_p, ops.dim
    mu = np.empty((n + 1, N))
    mu[0] = mu0
    forcing = ops.gamma + ops.pi * nu
    for i in range(n):
        mu[i + 1] = ops.phi[i] @ mu[i] + forcing[i]
    scale = 1.0 + np.linalg.norm(mu0)
    closure = float(np.linalg.norm(mu[n] - mu[0]) / scale)
    if not closure <= 1e-6:
        raise PropagationError(f"periodic closure violated: {closure:.3e}")
    mu[n] = mu[0]
    if return_closure:
        return mu, closure
    return mu


def _phase_for(kind, sys, traj, dx):
    if callable(kind):
        return kind(traj, dx)
    if kind == "forced":
        return phase_forced(sys.dim)
    if kind == "autonomous":
        return phase_autonomous(traj, dx)
    raise DomainError(f"unknown phase condition {kind!r}")


def pfim_solve(sys, guess, phase="forced", cfg=None, callback=None):
    """Iterate corrections until the residual or the relative update is small.

    Parameters
    ----------
    sys : SystemModel
    guess : PeriodicTrajectory
    phase : {"forced", "autonomous"} or callable
        A callable receives ``(trajectory, grid_derivative)`` and returns a
        :class:`PhaseCondition`; it is re-evaluated every iteration. With
        ``"forced"`` the frequency is never touched.
    cfg : PfimConfig, optional
        ``cfg.n_p`` is ignored here; the grid of ``guess`` is used.
    callback : callable, optional
        Called as ``callback(record, trajectory)`` for every iterate,
        including the initial guess.
    """
    cfg = cfg or PfimConfig(n_p=guess.n_p)
    if guess.dim != sys.dim:
        raise DimensionError(f"guess has {guess.dim} states, system {sys.dim}")
    update_omega = phase != "forced"
    traj = guess.copy()
    history = []
    ops = None
    delta = None
    best = np.inf
    best_state = None
    stall = 0
    converged = False
    message = "max_iter reached"
    last = dict(nu=0.0, phase_residual=0.0, closure=0.0)
    iteration = 0
    while True:
        dx = grid_derivative(traj)
        R = residual(sys, traj, dx)
        e_a = average_error(R)
        norms = np.linalg.norm(R, axis=1)
        e_res = float(norms.mean())
        e_r = relative_update(traj, delta) if delta is not None else float("nan")
        record = IterationRecord(
            iteration, e_a, e_r, traj.omega, e_res, float(norms.max()), **last
        )
        history.append(record)
        if callback is not None:
            callback(record, traj)
        metric = e_res if cfg.residual_metric == "mean_norm" else e_a
        if not np.isfinite(metric):
            message = "non-finite residual"
            break
        if metric < cfg.tol_a or (delta is not None and e_r < cfg.tol_r):
            converged = True
            message = "converged"
            break
        if metric < best:
            best, stall = metric, 0
            best_state = (traj, iteration)
        else:
            stall += 1
            if metric > cfg.divergence_factor * best:
                message = "diverged"
                break
            if stall >= cfg.stall_patience:
                message = f"stagnated; best residual at iteration {best_state[1]}"
                traj = best_state[0]
                ops = operators_at(sys, traj)
                break
        if iteration >= cfg.max_iter:
            break

        nodes = build_linearization(sys, traj, dx, R)
        ops = build_interval_operators(nodes, traj.dtau)
        pc = _phase_for(phase, sys, traj, dx)
        mu0, nu = solve_boundary(ops, pc, iteration)
        if not update_omega:
            nu = 0.0
        delta, closure = propagate_correction(ops, mu0, nu, return_closure=True)
        new_omega = traj.omega + nu
        last = dict(
            nu=nu,
            phase_residual=float(pc.upsilon @ np.append(mu0, nu) - pc.xi),
            closure=closure,
        )
        iteration += 1
        if not new_omega > 0:
            message = "frequency became non-positive"
            break
        traj = PeriodicTrajectory(traj.samples + delta, new_omega)

    if not cfg.record_history:
        history = history[-1:]
    return PfimResult(
        trajectory=traj,
        iterations=iteration,
        converged=converged,
        history=history,
        final_operators=ops,
        message=message,
    )


def operators_at(sys, traj):
    """Interval operators linearised about ``traj`` (e.g. for Floquet analysis)."""
    return build_interval_operators(build_linearization(sys, traj), traj.dtau)


def linear_periodic_solution(sys, n_p, omega, iterations=2):
    """Periodic response of a (linear) system from the zero trajectory.

    A single correction is exact up to the forcing quadrature; the default
    second pass removes that quadrature error.
    """
    guess = PeriodicTrajectory(np.zeros((n_p + 1, sys.dim)), omega)
    cfg = PfimConfig(n_p=n_p, max_iter=iterations)
    return pfim_solve(sys, guess, "forced", cfg).trajectory

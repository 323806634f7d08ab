"""Pseudo-arclength continuation in the forcing frequency, plus Floquet stability.

The branch is traced in the variables ``(x(0), omega)``. Each step predicts
along the secant of the last two accepted points and corrects with PFIM, the
bordered row of the boundary system being the arclength constraint.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import BranchStalledError, DomainError, PfimError
from .linalg import eigenvalues
from .pfim import PeriodicTrajectory, PfimConfig, PhaseCondition, operators_at, pfim_solve

__all__ = [
    "BranchPoint",
    "ContinuationConfig",
    "floquet",
    "is_stable",
    "phase_continuation",
    "arclength_residual",
    "continue_branch",
    "branch_to_records",
]

STABILITY_MARGIN = 1e-6
TRIVIAL_MULTIPLIER_TOL = 1e-4


@dataclass
class BranchPoint:
    x0: np.ndarray
    omega: float
    amplitude: float
    multipliers: np.ndarray
    stable: bool
    tangent: np.ndarray
    iterations: int = 0
    arclength: float = 0.0
    ds: float = 0.0
    trajectory: Optional[PeriodicTrajectory] = field(default=None, repr=False)

    @property
    def max_multiplier_abs(self):
        return float(np.abs(self.multipliers).max()) if len(self.multipliers) else float("nan")


@dataclass
class ContinuationConfig:
    omega_start: float
    omega_end: float
    ds: float = 0.02
    ds_min: float = 1e-4
    ds_max: float = 0.1
    max_points: int = 2000
    pfim: PfimConfig = field(default_factory=lambda: PfimConfig(n_p=1024, max_iter=15))
    grow: float = 1.25
    fast_iterations: int = 3
    # corrector results with this mean residual count as accepted when the
    # iteration stagnates instead of meeting the tolerances (non-smooth models)
    accept_residual: Optional[float] = None
    # a step that flips the stability flag is retried with a smaller ds until
    # both bracketing points have a multiplier this close to +1 (or ds_min)
    locate_transitions: Optional[float] = 0.01
    # the trajectory secant used by the predictor keeps only this fraction of
    # the resolvable harmonics, so grid-scale content is not extrapolated
    predictor_bandwidth: float = 0.125

    def __post_init__(self):
        if not 0 < self.ds_min <= self.ds <= self.ds_max:
            raise DomainError("need 0 < ds_min <= ds <= ds_max")
        if self.omega_start == self.omega_end:
            raise DomainError("omega_start and omega_end must differ")
        if min(self.omega_start, self.omega_end) <= 0:
            raise DomainError("sweep frequencies must be positive")
        if not 0 < self.predictor_bandwidth <= 1:
            raise DomainError("predictor_bandwidth must lie in (0, 1]")
        if self.max_points < 2:
            raise DomainError("max_points must be at least 2")


def floquet(ops):
    """Floquet multipliers: eigenvalues of the one-period propagator."""
    return eigenvalues(ops.phi_total)


def is_stable(multipliers, autonomous=False):
    """All multipliers inside the unit circle up to a small margin.

    For autonomous systems the multiplier closest to +1 is skipped when it is
    within ``1e-4`` of it (phase shift along the orbit).
    """
    mult = np.asarray(multipliers)
    if autonomous and len(mult):
        k = int(np.argmin(np.abs(mult - 1.0)))
        if abs(mult[k] - 1.0) < TRIVIAL_MULTIPLIER_TOL:
            mult = np.delete(mult, k)
    return bool(np.all(np.abs(mult) <= 1.0 + STABILITY_MARGIN))


def arclength_residual(prev, ds, x0, omega):
    """``N = <x0 - prev.x0, t_x> + (omega - prev.omega) t_omega - ds``."""
    t = prev.tangent
    return float((x0 - prev.x0) @ t[:-1] + (omega - prev.omega) * t[-1] - ds)


def phase_continuation(prev, ds, x0=None, omega=None):
    """Arclength row for the corrector, linearised at the current iterate.

    Without ``x0``/``omega`` the previous point itself is the iterate and
    ``xi = ds``.
    """
    if x0 is None:
        x0 = prev.x0
    if omega is None:
        omega = prev.omega
    xi = -arclength_residual(prev, ds, x0, omega)
    return PhaseCondition(np.asarray(prev.tangent, dtype=float), xi, "continuation")


def _amplitude(traj, column):
    return float(np.abs(traj.samples[:, column]).max())


def _distance_to_one(multipliers):
    return float(np.abs(np.asarray(multipliers) - 1.0).min())


def _bracket_too_wide(cur, point, tol):
    if tol is None or point.stable == cur.stable:
        return False
    return max(_distance_to_one(cur.multipliers), _distance_to_one(point.multipliers)) > tol


def _lowpass(diff, bandwidth):
    """Keep the lowest ``bandwidth`` fraction of harmonics of a periodic sample array."""
    body = diff[:-1]
    spec = np.fft.rfft(body, axis=0)
    spec[max(1, int(bandwidth * (spec.shape[0] - 1))) + 1 :] = 0.0
    out = np.fft.irfft(spec, n=body.shape[0], axis=0)
    return np.vstack([out, out[:1]])


def _unit(v):
    n = np.linalg.norm(v)
    if n == 0.0:
        raise DomainError("cannot normalise a zero secant")
    return v / n


def _point(sys, result, tangent, column, arclength, ds):
    traj = result.trajectory
    ops = operators_at(sys, traj)
    mult = floquet(ops)
    return BranchPoint(
        x0=traj.x0,
        omega=traj.omega,
        amplitude=_amplitude(traj, column),
        multipliers=mult,
        stable=is_stable(mult, sys.autonomous),
        tangent=tangent,
        iterations=result.iterations,
        arclength=arclength,
        ds=ds,
        trajectory=traj,
    )


def _accepted(result, cfg):
    if result.converged:
        return True
    if cfg.accept_residual is None or not result.message.startswith("stagnated"):
        return False
    best = min(h.residual_norm for h in result.history)
    return best <= cfg.accept_residual


def _forced_solve(sys, guess, cfg):
    result = pfim_solve(sys, guess, "forced", cfg.pfim)
    if not _accepted(result, cfg):
        raise BranchStalledError(
            f"seed solve at omega = {guess.omega:.6g} failed: {result.message}", []
        )
    return result


def continue_branch(sys, cfg, guess, amplitude_state=None, keep_trajectories=False):
    """Trace the periodic response of a forced system between two frequencies.

    Parameters
    ----------
    sys : SystemModel
        Forced system; ``omega`` is the continuation parameter.
    cfg : ContinuationConfig
    guess : PeriodicTrajectory
        Starting guess for the first point (its ``omega`` is replaced by
        ``cfg.omega_start``).
    amplitude_state : int, optional
        State column reported as amplitude; defaults to ``sys.observed``.
    keep_trajectories : bool
        Keep the sampled orbit of every point (otherwise only the last one).

    Raises
    ------
    BranchStalledError
        If the corrector fails even at ``ds_min``; ``.branch`` holds the
        points accepted so far.
    """
    if sys.autonomous:
        raise DomainError("frequency continuation needs a forced system")
    column = sys.observed if amplitude_state is None else amplitude_state
    lo, hi = sorted((cfg.omega_start, cfg.omega_end))
    direction = 1.0 if cfg.omega_end > cfg.omega_start else -1.0

    # seeds: two natural-parameter solves
    first = _forced_solve(sys, PeriodicTrajectory(guess.samples, cfg.omega_start), cfg)
    second_omega = cfg.omega_start + direction * cfg.ds
    second = _forced_solve(sys, PeriodicTrajectory(first.trajectory.samples, second_omega), cfg)
    secant = np.append(
        second.trajectory.x0 - first.trajectory.x0, second.trajectory.omega - first.trajectory.omega
    )
    tangent = _unit(secant)
    p0 = _point(sys, first, tangent, column, 0.0, 0.0)
    p1 = _point(sys, second, tangent, column, float(np.linalg.norm(secant)), float(np.linalg.norm(secant)))
    branch = [p0, p1]

    ds = cfg.ds
    prev_traj, cur_traj = first.trajectory, second.trajectory
    while len(branch) < cfg.max_points:
        cur = branch[-1]
        if not lo <= cur.omega <= hi:
            break
        sigma = np.linalg.norm(np.append(cur_traj.x0 - prev_traj.x0, cur_traj.omega - prev_traj.omega))
        shape = _lowpass(cur_traj.samples - prev_traj.samples, cfg.predictor_bandwidth)
        shape += (cur_traj.x0 - prev_traj.x0) - shape[0]
        step_ok = False
        while True:
            # secant predictor: x(0) moves along the tangent, the rest of the
            # orbit by the smoothed trajectory secant
            pred = cur_traj.samples + (ds / sigma) * shape
            pred_omega = cur.omega + cur.tangent[-1] * ds
            if pred_omega > 0:
                try:
                    result = pfim_solve(
                        sys,
                        PeriodicTrajectory(pred, pred_omega),
                        lambda traj, dx, _c=cur, _ds=ds: phase_continuation(_c, _ds, traj.x0, traj.omega),
                        cfg.pfim,
                    )
                except PfimError:
                    result = None
                if result is not None and _accepted(result, cfg):
                    new = result.trajectory
                    move = np.append(new.x0 - cur.x0, new.omega - cur.omega)
                    dist = float(np.linalg.norm(move))
                    if 0 < dist <= 2.0 * ds and move @ cur.tangent > 0:
                        tangent = _unit(move)
                        point = _point(sys, result, tangent, column, cur.arclength + dist, ds)
                        if ds <= cfg.ds_min or not _bracket_too_wide(cur, point, cfg.locate_transitions):
                            step_ok = True
                            break
            if ds <= cfg.ds_min:
                break
            ds = max(cfg.ds_min, 0.5 * ds)
        if not step_ok:
            raise BranchStalledError(
                f"corrector failed at omega = {cur.omega:.6g} with ds = {ds:.3g}", branch
            )
        if not keep_trajectories:
            cur.trajectory = None
        branch.append(point)
        prev_traj, cur_traj = cur_traj, new
        if result.iterations <= cfg.fast_iterations:
            ds = min(cfg.ds_max, cfg.grow * ds)
    return branch


def branch_to_records(branch):
    """One dict per point with the tabulated branch fields."""
    return [
        {
            "omega": p.omega,
            "amplitude": p.amplitude,
            "stable": bool(p.stable),
            "max_multiplier_abs": p.max_multiplier_abs,
            "iterations": int(p.iterations),
        }
        for p in branch
    ]

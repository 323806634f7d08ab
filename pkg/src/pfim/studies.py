"""Error studies against reference solutions: per-iteration errors, fitted
convergence orders, error plateaus and timing comparisons."""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DomainError
from .pfim import PfimConfig, PeriodicTrajectory, pfim_solve
from .reference import (
    ShootingConfig,
    ShootingSolution,
    align_phase,
    shooting_solve,
    shooting_trajectory,
    steady_state_reference,
)
from .system import TWO_PI

__all__ = [
    "grid_error",
    "fit_order",
    "order_from_iterations",
    "plateau_level",
    "iterations_to_plateau",
    "reference_solution",
    "StudyRecord",
    "StudyResult",
    "convergence_study",
    "perturbation_direction",
    "one_step_map",
    "fit_common_order",
    "one_step_order",
    "fourier_truncate",
    "overshoot",
    "hbm_force_overshoot",
    "grid_force_overshoot",
]


def grid_error(traj, ref, state=0):
    """Mean absolute deviation of one state over the grid nodes."""
    a = traj.samples if isinstance(traj, PeriodicTrajectory) else np.asarray(traj)
    b = ref.samples if isinstance(ref, PeriodicTrajectory) else np.asarray(ref)
    if a.shape != b.shape:
        raise DomainError(f"grids differ: {a.shape} vs {b.shape}")
    return float(np.abs(a[:-1, state] - b[:-1, state]).mean())


def fit_order(pairs):
    """Least-squares slope of ``log e_next`` against ``log e``.

    ``nan`` if fewer than two pairs are given.
    """
    pairs = [(a, b) for a, b in pairs if a > 0 and b > 0]
    if len(pairs) < 2:
        return float("nan")
    x, y = np.log(np.array(pairs)).T
    if np.ptp(x) == 0:
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


def plateau_level(errors, tail=3):
    """Attainable precision: smallest of the last ``tail`` errors."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        return float("nan")
    return float(errors[-tail:].min())


def iterations_to_plateau(errors, factor=2.0, tail=3):
    """First iteration whose error is within ``factor`` of the plateau."""
    level = plateau_level(errors, tail)
    for i, e in enumerate(errors):
        if e <= factor * level:
            return i
    return len(errors) - 1


def order_from_iterations(errors, lo=1e-9, hi=1e-2, floor=10.0, tail=3):
    """Fitted order over consecutive iterate pairs in the asymptotic window.

    A pair ``(e_i, e_{i+1})`` is used when ``lo <= e_i <= hi`` and
    ``e_{i+1}`` exceeds ``floor`` times the plateau, so that the
    discretisation floor does not bend the fit.
    """
    level = plateau_level(errors, tail)
    pairs = [
        (a, b)
        for a, b in zip(errors[:-1], errors[1:])
        if lo <= a <= hi and b > floor * level
    ]
    return fit_order(pairs), pairs


def reference_solution(sys, n_p, omega, x0_guess, method="shooting", n_s=2**14, align_to=None):
    """Reference orbit sampled on an ``n_p`` grid by RK4 integration.

    Parameters
    ----------
    method : {"shooting", "steady"}
        Shooting is seeded with ``x0_guess`` and ``2 pi / omega``; the steady
        reference integrates from ``x0_guess`` until the period map settles
        (forced systems only).
    align_to : array_like, optional
        For autonomous systems, shift the phase so the orbit passes closest to
        this state at ``tau = 0``.

    Returns
    -------
    ref : PeriodicTrajectory
    solution : ShootingSolution or None
    """
    if method == "shooting":
        sol = shooting_solve(sys, x0_guess, TWO_PI / omega, ShootingConfig(n_s=n_s), omega=None if sys.autonomous else omega)
        if sys.autonomous and align_to is not None:
            x0 = align_phase(sys, sol, align_to)
            sol = ShootingSolution(x0, sol.period, sol.n_s, sol.monodromy, sol.iterations, sol.residual)
        return shooting_trajectory(sys, sol, n_p, omega=None if sys.autonomous else omega), sol
    if method == "steady":
        if sys.autonomous:
            raise DomainError("steady-state reference needs a forced system")
        ref = steady_state_reference(sys, omega, n_p, n_s=n_s, x0=x0_guess)
        return ref, None
    raise DomainError(f"unknown reference method {method!r}")


@dataclass
class StudyRecord:
    iteration: int
    error: float
    omega_error: float
    e_a: float
    e_r: float
    residual: float


@dataclass
class StudyResult:
    records: List[StudyRecord]
    order: float
    pairs: list
    plateau: float
    plateau_iteration: int
    converged: bool
    message: str
    omega: float
    trajectory: Optional[PeriodicTrajectory] = field(default=None, repr=False)
    reference: Optional[PeriodicTrajectory] = field(default=None, repr=False)

    @property
    def errors(self):
        return [r.error for r in self.records]


def convergence_study(sys, guess, ref=None, cfg=None, phase=None, reference="shooting", n_s=2**14):
    """Run PFIM from ``guess`` and record the error of every iterate.

    Parameters
    ----------
    ref : PeriodicTrajectory, optional
        Reference on the grid of ``guess``. If omitted it is computed once
        after the run with :func:`reference_solution`, seeded by the final
        PFIM state (``reference`` and ``n_s`` select the method).

    Returns
    -------
    StudyResult
    """
    if phase is None:
        phase = "autonomous" if sys.autonomous else "forced"
    cfg = cfg or PfimConfig(n_p=guess.n_p)
    stats, iterates = [], []

    def callback(rec, traj):
        stats.append(rec)
        iterates.append((traj.samples.copy(), traj.omega))

    result = pfim_solve(sys, guess, phase, cfg, callback=callback)
    if ref is None:
        final = result.trajectory
        ref, _ = reference_solution(
            sys, final.n_p, final.omega, final.x0, reference, n_s, align_to=final.x0
        )
    records = [
        StudyRecord(
            rec.iteration,
            grid_error(samples, ref, sys.observed),
            abs(omega - ref.omega),
            rec.e_a,
            rec.e_r,
            rec.residual_norm,
        )
        for rec, (samples, omega) in zip(stats, iterates)
    ]
    errors = [r.error for r in records]
    order, pairs = order_from_iterations(errors)
    return StudyResult(
        records=records,
        order=order,
        pairs=pairs,
        plateau=plateau_level(errors),
        plateau_iteration=iterations_to_plateau(errors),
        converged=result.converged,
        message=result.message,
        omega=result.omega,
        trajectory=result.trajectory,
        reference=ref,
    )


def perturbation_direction(n_p, dim, omega=1.0, seed=0, harmonics=3, state=0):
    """Smooth random perturbation from the lowest ``harmonics`` Fourier modes.

    For an even state count the states are read as positions followed by
    velocities: only the positions get random modes and the velocities get
    ``omega`` times their ``tau`` derivative, so the kinematic rows stay
    satisfied as they are for every PFIM iterate. The result is normalised
    to unit grid-mean magnitude in ``state``.
    """
    rng = np.random.default_rng(seed)
    tau = TWO_PI * np.arange(n_p + 1) / n_p
    m = dim // 2 if dim % 2 == 0 else dim
    d = np.zeros((n_p + 1, dim))
    for k in range(1, harmonics + 1):
        a, b = rng.standard_normal((2, m))
        d[:, :m] += (np.outer(np.cos(k * tau), a) + np.outer(np.sin(k * tau), b)) / k
        if m < dim:
            d[:, m:] += omega * (np.outer(-np.sin(k * tau), a) + np.outer(np.cos(k * tau), b))
    d[-1] = d[0]
    return d / np.abs(d[:-1, state]).mean()


def one_step_map(sys, ref, eps, seed=0, harmonics=3, floor=None):
    """Errors before and after a single PFIM step from ``ref + eps d``.

    Returns arrays ``e0, e1`` (one entry per ``eps``) and the error of one step
    taken from the reference itself, which is the discretisation floor.
    """
    d = perturbation_direction(ref.n_p, sys.dim, ref.omega, seed, harmonics, sys.observed)
    phase = "autonomous" if sys.autonomous else "forced"
    cfg = PfimConfig(n_p=ref.n_p, max_iter=1, tol_a=1e-300, tol_r=1e-300)

    def step(samples):
        out = pfim_solve(sys, PeriodicTrajectory(samples, ref.omega), phase, cfg).trajectory
        return grid_error(out, ref, sys.observed)

    if floor is None:
        floor = step(ref.samples)
    e0, e1 = [], []
    for h in np.atleast_1d(eps):
        x = ref.samples + h * d
        e0.append(grid_error(x, ref.samples, sys.observed))
        e1.append(step(x))
    return np.array(e0), np.array(e1), floor


def fit_common_order(groups):
    """Common log-log slope of several pair sets, each with its own offset."""
    num = den = 0.0
    for pairs in groups:
        if len(pairs) < 2:
            continue
        x, y = np.log(np.asarray(pairs, dtype=float)).T
        x, y = x - x.mean(), y - y.mean()
        num += x @ y
        den += x @ x
    return float(num / den) if den > 0 else float("nan")


def one_step_order(sys, ref, eps=None, seed=0, n_seeds=8, floor_factor=10.0):
    """Fitted order of the one-step error map over several random directions.

    Directions use seeds ``seed, ..., seed + n_seeds - 1``; perturbation sizes
    whose post-step error is within ``floor_factor`` of the discretisation
    floor are dropped. The order is the common slope with one offset per
    direction.

    Returns
    -------
    order : float
    groups : list of list of (e0, e1)
    floor : float
    """
    if eps is None:
        eps = np.logspace(-0.5, -5, 10)
    groups = []
    floor = None
    for k in range(n_seeds):
        e0, e1, floor = one_step_map(sys, ref, eps, seed + k, floor=floor)
        keep = e1 > floor_factor * max(floor, np.finfo(float).tiny)
        groups.append(list(zip(e0[keep], e1[keep])))
    return fit_common_order(groups), groups, floor


def fourier_truncate(values, H):
    """Keep harmonics ``0..H`` of uniformly sampled periodic values (no end node)."""
    spec = np.fft.rfft(values, axis=0)
    spec[H + 1 :] = 0.0
    return np.fft.irfft(spec, n=len(values), axis=0)


def overshoot(recon, true, window):
    """Excursion of ``recon`` beyond the local range of ``true`` at its largest jump.

    Both arrays sample one period uniformly (no end node). The range of
    ``true`` is taken over ``window`` samples on either side of the jump and
    the excursion is returned as a fraction of the jump size.
    """
    true = np.asarray(true, dtype=float)
    recon = np.asarray(recon, dtype=float)
    steps = np.abs(np.roll(true, -1) - true)
    k = int(np.argmax(steps))
    jump = steps[k]
    if jump == 0.0:
        return 0.0
    idx = np.arange(k - window + 1, k + window + 1) % len(true)
    lo, hi = true[idx].min(), true[idx].max()
    excess = max(float((recon[idx] - hi).max()), float((lo - recon[idx]).max()), 0.0)
    return excess / jump


def force_along(force, samples):
    """Evaluate ``force(x, xdot)`` on the first two state columns."""
    return force(samples[..., 0], samples[..., 1])


def hbm_force_overshoot(sol, force, n_fine=2**14, window_periods=1.5):
    """Gibbs overshoot of the ``H``-harmonic force seen by harmonic balance.

    The force along the HBM orbit is sampled on ``n_fine`` points and
    truncated to the solution's ``H`` harmonics; the window spans
    ``window_periods`` shortest resolved periods ``2 pi / H`` each side.

    Returns
    -------
    overshoot : float
        Fraction of the jump.
    l2 : float
        RMS difference between truncated and sampled force.
    """
    tau = TWO_PI * np.arange(n_fine) / n_fine
    true = force_along(force, sol.synthesize(tau))
    recon = fourier_truncate(true, sol.H)
    window = max(1, int(window_periods * n_fine / sol.H))
    return overshoot(recon, true, window), float(np.sqrt(np.mean((recon - true) ** 2)))


def grid_force_overshoot(traj, ref, force, window_fraction=0.15):
    """Overshoot of the nodal force of ``traj`` against that of ``ref``.

    Both trajectories share a grid; the window is ``window_fraction`` of the
    period on each side of the largest jump of the reference force.
    """
    a = traj.samples[:-1] if isinstance(traj, PeriodicTrajectory) else np.asarray(traj)[:-1]
    b = ref.samples[:-1] if isinstance(ref, PeriodicTrajectory) else np.asarray(ref)[:-1]
    window = max(1, int(window_fraction * len(a)))
    return overshoot(force_along(force, a), force_along(force, b), window)

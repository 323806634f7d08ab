"""System abstraction and the sampled periodic trajectory.

A :class:`SystemModel` wraps a first-order system ``dx/dt = f(x, tau; omega)``
written in scaled time ``tau = omega t`` over ``[0, 2 pi]``. The callables are
expected to be vectorised: ``rhs(x, tau, omega)`` takes ``x`` of shape
``(..., N)`` and ``tau`` broadcastable to ``x.shape[:-1]``, and returns the
same shape; ``jacobian`` returns ``(..., N, N)``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, DomainError, GridTooCoarseError

__all__ = [
    "SystemModel",
    "PeriodicTrajectory",
    "grid_derivative",
    "residual",
    "average_error",
    "mean_residual_norm",
    "relative_update",
    "check_jacobian",
]

TWO_PI = 2.0 * np.pi
MIN_INTERVALS = 8
UPDATE_FLOOR = 1e-8


@dataclass(frozen=True)
class SystemModel:
    """A first-order system in scaled time.

    Attributes
    ----------
    dim : int
        Number of first-order states ``N``.
    rhs, jacobian : callable
        ``f(x, tau, omega)`` (derivative w.r.t. physical time) and ``df/dx``.
    autonomous : bool
        True when ``f`` does not depend on ``tau``; the frequency is then an
        unknown of the periodic problem.
    name : str
    observed : int
        State column used for amplitude reporting and error studies.
    params : dict
        Parameter values the model was built with.
    switching : callable, optional
        ``g(x, tau)`` returning an array ``(..., k)`` of switching functions.
        Points where any ``|g|`` is small are treated as non-smooth.
    smoothness : str
        One of ``smooth``, ``C1``, ``C0``, ``C-1``, ``C-1-forcing``.
    """

    dim: int
    rhs: Callable
    jacobian: Callable
    autonomous: bool = False
    name: str = "system"
    observed: int = 0
    params: dict = field(default_factory=dict)
    switching: Optional[Callable] = None
    smoothness: str = "smooth"

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionError("dim must be positive")
        if not 0 <= self.observed < self.dim:
            raise DimensionError("observed state index out of range")

    def f(self, x, tau, omega):
        out = np.asarray(self.rhs(np.asarray(x, dtype=float), tau, omega), dtype=float)
        if out.shape[-1] != self.dim:
            raise DimensionError(f"{self.name}: rhs returned shape {out.shape}")
        return out

    def jac(self, x, tau, omega):
        out = np.asarray(self.jacobian(np.asarray(x, dtype=float), tau, omega), dtype=float)
        if out.shape[-2:] != (self.dim, self.dim):
            raise DimensionError(f"{self.name}: jacobian returned shape {out.shape}")
        return out


class PeriodicTrajectory:
    """Uniform samples of a candidate periodic solution over ``[0, 2 pi]``.

    ``samples`` has ``n_p + 1`` rows; the last row is forced to be an exact
    copy of the first.
    """

    def __init__(self, samples, omega):
        samples = np.array(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.shape[0] < MIN_INTERVALS + 1:
            raise GridTooCoarseError(
                f"need at least {MIN_INTERVALS} intervals, got {samples.shape[0] - 1}"
            )
        if not omega > 0:
            raise DomainError(f"omega must be positive, got {omega}")
        samples[-1] = samples[0]
        self.samples = samples
        self.omega = float(omega)

    @classmethod
    def from_function(cls, func, n_p, omega):
        """Sample ``func(tau) -> (..., N)`` on the grid of ``n_p`` intervals."""
        tau = TWO_PI * np.arange(n_p + 1) / n_p
        values = np.asarray(func(tau), dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        return cls(values, omega)

    @property
    def n_p(self):
        return self.samples.shape[0] - 1

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def tau(self):
        return TWO_PI * np.arange(self.n_p + 1) / self.n_p

    @property
    def dtau(self):
        return TWO_PI / self.n_p

    @property
    def x0(self):
        return self.samples[0].copy()

    def copy(self):
        return PeriodicTrajectory(self.samples.copy(), self.omega)

    def __repr__(self):
        return f"PeriodicTrajectory(n_p={self.n_p}, dim={self.dim}, omega={self.omega!r})"


def grid_derivative(traj):
    """``dx/dtau`` at every node by fourth-order periodic central differences."""
    n = traj.n_p
    if n < MIN_INTERVALS:
        raise GridTooCoarseError(f"grid derivative needs n_p >= {MIN_INTERVALS}")
    x = traj.samples[:-1]
    d = (
        -np.roll(x, -2, axis=0)
        + 8.0 * np.roll(x, -1, axis=0)
        - 8.0 * np.roll(x, 1, axis=0)
        + np.roll(x, 2, axis=0)
    ) / (12.0 * traj.dtau)
    return np.vstack([d, d[:1]])


def residual(sys, traj, dx=None):
    """Nodal residual ``R_i = f(x_i, tau_i) - omega * x'_i``, shape ``(n_p+1, N)``."""
    if sys.dim != traj.dim:
        raise DimensionError(f"system has {sys.dim} states, trajectory {traj.dim}")
    if dx is None:
        dx = grid_derivative(traj)
    tau = traj.tau[:-1]
    R = sys.f(traj.samples[:-1], tau, traj.omega) - traj.omega * dx[:-1]
    return np.vstack([R, R[:1]])


def average_error(R):
    """Norm of the node-averaged residual vector (sign cancellation included)."""
    R = np.asarray(R, dtype=float)
    return float(np.linalg.norm(R.mean(axis=0)))


def mean_residual_norm(R):
    """Node average of the residual norms; cannot cancel."""
    R = np.asarray(R, dtype=float)
    return float(np.linalg.norm(R, axis=1).mean())


def relative_update(traj, delta):
    """Mean over nodes of ``|dx_i| / max(|x_i|, 1e-8)``."""
    samples = traj.samples if isinstance(traj, PeriodicTrajectory) else np.asarray(traj)
    delta = np.asarray(delta, dtype=float)
    if delta.shape != samples.shape:
        raise DimensionError(f"update shape {delta.shape} != trajectory shape {samples.shape}")
    denom = np.maximum(np.linalg.norm(samples, axis=1), UPDATE_FLOOR)
    return float((np.linalg.norm(delta, axis=1) / denom).mean())


def check_jacobian(sys, points, tau, omega, margin=1e-3, step=1e-6):
    """Largest scaled mismatch between ``sys.jacobian`` and central differences.

    Returns the worst ratio ``|J - J_fd| / max(1e-5, 1e-4 |J|)`` over the
    points that lie at least ``margin`` away from every switching surface,
    plus the number of points used. A ratio at most 1 passes.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tau = np.broadcast_to(np.asarray(tau, dtype=float), points.shape[:1])
    if sys.switching is not None:
        g = np.atleast_2d(np.asarray(sys.switching(points, tau)).reshape(len(points), -1))
        keep = np.all(np.abs(g) > margin, axis=1)
        points, tau = points[keep], tau[keep]
    worst = 0.0
    for x, t in zip(points, tau):
        J = sys.jac(x, t, omega)
        h = step * np.maximum(1.0, np.abs(x))
        plus = x + np.diag(h)
        minus = x - np.diag(h)
        J_fd = ((sys.f(plus, t, omega) - sys.f(minus, t, omega)) / (2.0 * h[:, None])).T
        scale = max(1e-5, 1e-4 * np.abs(J).max())
        worst = max(worst, float(np.abs(J - J_fd).max() / scale))
    return worst, len(points)

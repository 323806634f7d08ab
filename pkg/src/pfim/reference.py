"""Reference solvers used to cross-check PFIM.

* fixed-step RK4 flow map and shooting with a finite-difference Jacobian
* harmonic balance with alternating frequency-time evaluation and a
  finite-difference coefficient Jacobian
* brute-force steady state by long integration
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUpError, ConvergenceError, DomainError, NotSettledError
from .linalg import solve_dense
from .system import TWO_PI, PeriodicTrajectory

__all__ = [
    "rk4_flow",
    "rk4_samples",
    "ShootingConfig",
    "ShootingSolution",
    "shooting_solve",
    "shooting_trajectory",
    "align_phase",
    "FourierSolution",
    "HbmConfig",
    "hbm_solve",
    "hbm_linear_guess",
    "aft_samples",
    "steady_state_reference",
]


_END_NUDGE = 1e-9


def _omega_for(sys, omega):
    if omega is not None:
        return omega
    return sys.params.get("omega", 1.0)


def rk4_flow(sys, x0, t_span, n_s, omega=None, t0=0.0):
    """Classical fixed-step RK4 end state of ``dx/dt = f(x, omega t)``.

    ``x0`` may carry leading batch axes; ``t_span`` may then be an array with
    one span per batch entry.
    """
    if n_s < 1:
        raise DomainError("n_s must be >= 1")
    omega = _omega_for(sys, omega)
    f = sys.rhs
    x = np.array(x0, dtype=float)
    h = np.asarray(t_span, dtype=float) / n_s
    hb = h[..., None] if h.ndim else h
    half, sixth = 0.5 * hb, hb / 6.0
    # last stage is evaluated just inside the step so that excitations that
    # jump exactly on a step boundary contribute their left limit
    end = h * (1.0 - _END_NUDGE)
    for k in range(n_s):
        t = t0 + k * h
        k1 = f(x, omega * t, omega)
        k2 = f(x + half * k1, omega * (t + 0.5 * h), omega)
        k3 = f(x + half * k2, omega * (t + 0.5 * h), omega)
        k4 = f(x + hb * k3, omega * (t + end), omega)
        x = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        # the finiteness test is comparatively costly; sample it
        if (k & 63) == 63 and not np.isfinite(x).all():
            raise BlowUpError(f"non-finite state at RK4 step {k}", k)
    if not np.isfinite(x).all():
        raise BlowUpError(f"non-finite state at RK4 step {n_s - 1}", n_s - 1)
    return x


def rk4_samples(sys, x0, omega, n_p, substeps, period=None):
    """Integrate one period from ``x0`` and return the ``n_p + 1`` grid samples."""
    omega = _omega_for(sys, omega)
    T = TWO_PI / omega if period is None else period
    h = T / (n_p * substeps)
    out = np.empty((n_p + 1, len(x0)))
    out[0] = x0
    x = np.array(x0, dtype=float)
    # flow between grid nodes restarted from the node time to avoid drift in t
    for i in range(n_p):
        x = rk4_flow(sys, x, h * substeps, substeps, omega, t0=i * T / n_p)
        out[i + 1] = x
    return out


@dataclass
class ShootingConfig:
    n_s: int = 2**14
    tol: float = 1e-11
    max_iter: int = 50
    fd_rel: float = 1e-7
    max_backtrack: int = 10


@dataclass
class ShootingSolution:
    x0: np.ndarray
    period: float
    n_s: int
    monodromy: np.ndarray
    iterations: int
    residual: float
    # (iteration, max |G|, relative update) per Newton step
    history: list = field(default_factory=list, repr=False)

    @property
    def omega(self):
        return TWO_PI / self.period


def _flow_with_columns(sys, x0, T, n_s, omega, fd_rel, with_period):
    """Base flow plus forward-difference columns (states, optionally period)."""
    N = len(x0)
    steps = fd_rel * (1.0 + np.abs(x0))
    batch = np.repeat(x0[None], N + 1 + with_period, axis=0)
    batch[1 : N + 1] += np.diag(steps)
    spans = np.full(batch.shape[0], T)
    dT = fd_rel * (1.0 + T)
    if with_period:
        spans[-1] = T + dT
    end = rk4_flow(sys, batch, spans, n_s, omega)
    base = end[0]
    J = ((end[1 : N + 1] - base) / steps[:, None]).T
    dpsi_dT = (end[-1] - base) / dT if with_period else None
    return base, J, dpsi_dT


def _period_map_residual(sys, x0, T, n_s, omega):
    w = TWO_PI / T if sys.autonomous else _omega_for(sys, omega)
    try:
        return float(np.abs(rk4_flow(sys, x0, T, n_s, w) - x0).max())
    except BlowUpError:
        return np.inf


def _backtrack(sys, x0, T, step, res, cfg, omega):
    """Damped Newton update: halve the step until the residual drops."""
    N = len(x0)
    lam = 1.0
    for _ in range(cfg.max_backtrack):
        x_new = x0 + lam * step[:N]
        T_new = T + lam * step[N]
        if T_new > 0:
            if lam == 1.0 and res < 1e-6:
                # near the solution the full step is always taken
                return x_new, T_new
            trial = _period_map_residual(sys, x_new, T_new, cfg.n_s, omega)
            if trial < res:
                return x_new, T_new
        lam *= 0.5
    return x0 + lam * step[:N], T + lam * step[N]


def shooting_solve(sys, guess_x0, period_guess, cfg=None, omega=None):
    """Newton shooting on ``psi(x0, T) - x0 = 0``.

    For autonomous systems the period is an extra unknown and the update is
    kept orthogonal to ``f(x0)``. For forced systems ``period_guess`` is the
    forcing period and is held fixed.
    """
    cfg = cfg or ShootingConfig()
    x0 = np.array(guess_x0, dtype=float)
    N = len(x0)
    T = float(period_guess)
    auto = sys.autonomous
    res = np.inf
    history = []
    rel = float("nan")
    for it in range(cfg.max_iter + 1):
        w = TWO_PI / T if auto else _omega_for(sys, omega)
        end, J, dpsi_dT = _flow_with_columns(sys, x0, T, cfg.n_s, w, cfg.fd_rel, auto)
        G = end - x0
        res = float(np.abs(G).max())
        history.append((it, res, rel))
        if res <= cfg.tol:
            return ShootingSolution(x0, T, cfg.n_s, J, it, res, history)
        if it == cfg.max_iter:
            break
        if auto:
            A = np.zeros((N + 1, N + 1))
            A[:N, :N] = J - np.eye(N)
            A[:N, N] = dpsi_dT
            A[N, :N] = sys.f(x0, 0.0, w)
            step = solve_dense(A, -np.append(G, 0.0))
        else:
            step = np.append(solve_dense(J - np.eye(N), -G), 0.0)
        x_new, T = _backtrack(sys, x0, T, step, res, cfg, omega)
        rel = float(np.linalg.norm(x_new - x0) / max(np.linalg.norm(x_new), 1e-8))
        x0 = x_new
    raise ConvergenceError(
        f"shooting stalled at |G| = {res:.3e} after {cfg.max_iter} iterations",
        ShootingSolution(x0, T, cfg.n_s, J, cfg.max_iter, res, history),
    )


def shooting_trajectory(sys, sol, n_p, substeps=None, omega=None):
    """Resample a shooting orbit on the PFIM grid by RK4 from ``sol.x0``."""
    if substeps is None:
        substeps = max(1, sol.n_s // n_p)
    w = sol.omega if sys.autonomous else _omega_for(sys, omega)
    samples = rk4_samples(sys, sol.x0, w, n_p, substeps, period=sol.period)
    return PeriodicTrajectory(samples, w)


def align_phase(sys, sol, target_x0, n_fine=4096, newton_steps=8):
    """Point on an autonomous shooting orbit closest to ``target_x0``.

    Returns the state reached after the time shift that minimises the
    distance; useful for comparing orbits whose phase is arbitrary.
    """
    T = sol.period
    w = TWO_PI / T
    samples = rk4_samples(sys, sol.x0, w, n_fine, max(1, sol.n_s // n_fine), period=T)
    k = int(np.argmin(np.linalg.norm(samples[:-1] - target_x0, axis=1)))
    x = samples[k]
    h_fine = T / n_fine
    for _ in range(newton_steps):
        fx = sys.f(x, 0.0, w)
        d = x - target_x0
        # stationarity of |x(s) - target|^2 along the flow, Gauss-Newton in s
        ds = -(d @ fx) / (fx @ fx)
        if abs(ds) < 1e-15 * T:
            break
        n_sub = max(1, int(np.ceil(abs(ds) / h_fine * 8)))
        if ds > 0:
            x = rk4_flow(sys, x, ds, n_sub, w)
        else:
            # step backwards with negative time span
            x = rk4_flow(sys, x, ds, n_sub, w)
    return x


# ---------------------------------------------------------------------------
# harmonic balance


@dataclass
class FourierSolution:
    """Per-state coefficients ``(a0, a1..aH, b1..bH)``, shape ``(N, 2H+1)``."""

    H: int
    coeffs: np.ndarray
    omega: float
    iterations: int = 0
    residual: float = float("nan")
    # (iteration, max |G|, relative update) per Newton step
    history: list = field(default_factory=list, repr=False)

    def synthesize(self, tau):
        tau = np.asarray(tau, dtype=float)
        k = np.arange(1, self.H + 1)
        ph = np.multiply.outer(tau, k)
        a0 = self.coeffs[:, 0]
        a = self.coeffs[:, 1 : self.H + 1]
        b = self.coeffs[:, self.H + 1 :]
        return a0 + np.cos(ph) @ a.T + np.sin(ph) @ b.T

    def trajectory(self, n_p):
        tau = TWO_PI * np.arange(n_p + 1) / n_p
        return PeriodicTrajectory(self.synthesize(tau), self.omega)


@dataclass
class HbmConfig:
    tol: float = 1e-10
    max_iter: int = 50
    fd_step: float = 1e-7
    n_time: int = None
    chunk: int = 128


def aft_samples(H, n_time=None):
    """Time-sample count: at least 256 and 8H, rounded up to a power of two."""
    n = max(256, 8 * H) if n_time is None else n_time
    return 1 << int(np.ceil(np.log2(n)))


def _basis(H, tau):
    k = np.arange(1, H + 1)
    ph = np.multiply.outer(tau, k)
    cos, sin = np.cos(ph), np.sin(ph)
    # value basis (n_t, 2H+1) and its tau-derivative
    B = np.hstack([np.ones((len(tau), 1)), cos, sin])
    dB = np.hstack([np.zeros((len(tau), 1)), -sin * k, cos * k])
    return B, dB


def _hbm_residual(sys, C, omega, B, dB, proj, tau):
    """Galerkin residual(s) for coefficient arrays ``C`` of shape (..., N, 2H+1)."""
    x = np.einsum("tk,...nk->...tn", B, C)
    xd = np.einsum("tk,...nk->...tn", dB, C)
    R = omega * xd - sys.f(x, tau, omega)
    return np.einsum("kt,...tn->...nk", proj, R)


def hbm_solve(sys, H, omega, guess=None, cfg=None):
    """Harmonic balance for a forced system, Newton with an FD Jacobian.

    The Galerkin residual is the Fourier projection of
    ``omega x_H' - f(x_H, tau)`` computed on ``aft_samples(H)`` time points.
    """
    if sys.autonomous:
        raise DomainError("harmonic balance here handles forced systems only")
    cfg = cfg or HbmConfig()
    n_t = aft_samples(H, cfg.n_time)
    tau = TWO_PI * np.arange(n_t) / n_t
    B, dB = _basis(H, tau)
    weights = np.full(2 * H + 1, 2.0 / n_t)
    weights[0] = 1.0 / n_t
    proj = (B * weights).T
    N = sys.dim
    nc = N * (2 * H + 1)

    if guess is None:
        C = np.zeros((N, 2 * H + 1))
    else:
        C = np.zeros((N, 2 * H + 1))
        h = min(H, guess.H)
        C[:, 0] = guess.coeffs[:, 0]
        C[:, 1 : h + 1] = guess.coeffs[:, 1 : h + 1]
        C[:, H + 1 : H + 1 + h] = guess.coeffs[:, guess.H + 1 : guess.H + 1 + h]

    res = np.inf
    history = []
    rel = float("nan")
    for it in range(cfg.max_iter + 1):
        G = _hbm_residual(sys, C, omega, B, dB, proj, tau)
        res = float(np.abs(G).max())
        history.append((it, res, rel))
        if res <= cfg.tol:
            return FourierSolution(H, C, omega, it, res, history)
        if it == cfg.max_iter:
            break
        flat = C.ravel()
        steps = cfg.fd_step * (1.0 + np.abs(flat))
        J = np.empty((nc, nc))
        g0 = G.ravel()
        for start in range(0, nc, cfg.chunk):
            stop = min(start + cfg.chunk, nc)
            cols = np.arange(start, stop)
            batch = np.repeat(flat[None], len(cols), axis=0)
            batch[np.arange(len(cols)), cols] += steps[cols]
            Gp = _hbm_residual(sys, batch.reshape(-1, N, 2 * H + 1), omega, B, dB, proj, tau)
            J[:, start:stop] = ((Gp.reshape(len(cols), -1) - g0) / steps[cols, None]).T
        dC = np.linalg.solve(J, g0).reshape(N, 2 * H + 1)
        C = C - dC
        rel = float(np.linalg.norm(dC) / max(np.linalg.norm(C), 1e-8))
    raise ConvergenceError(
        f"harmonic balance stalled at |G| = {res:.3e} after {cfg.max_iter} iterations",
        FourierSolution(H, C, omega, cfg.max_iter, res, history),
    )


def hbm_linear_guess(sys_linear, H, omega, cfg=None):
    """HBM of the linear part: one Newton step solves it up to rounding.

    On stiff models the FD Jacobian limits the attainable residual, so the
    best iterate is returned even when ``cfg.tol`` is not met.
    """
    cfg = cfg or HbmConfig()
    try:
        return hbm_solve(sys_linear, H, omega, None, HbmConfig(tol=cfg.tol, max_iter=3, n_time=cfg.n_time))
    except ConvergenceError as exc:
        return exc.partial


# ---------------------------------------------------------------------------
# long integration


def steady_state_reference(sys, omega, n_p, settle_periods=200, n_s=1024, x0=None, substeps=None):
    """Settle by brute-force RK4 integration, then sample one period.

    ``n_s`` is the number of RK4 steps per forcing period during settling.

    Raises
    ------
    NotSettledError
        If the period-map displacement is not decreasing over the last 50
        periods (unless it is already at round-off level).
    """
    omega = _omega_for(sys, omega)
    T = TWO_PI / omega
    x = np.zeros(sys.dim) if x0 is None else np.array(x0, dtype=float)
    moves = []
    for _ in range(settle_periods):
        nxt = rk4_flow(sys, x, T, n_s, omega)
        moves.append(float(np.linalg.norm(nxt - x)))
        x = nxt
    tail = np.array(moves[-50:])
    scale = 1.0 + np.linalg.norm(x)
    if tail[-1] > 1e-9 * scale and not tail[-1] < 0.5 * tail[0]:
        raise NotSettledError(
            f"period map still moving by {tail[-1]:.3e} after {settle_periods} periods"
        )
    if substeps is None:
        substeps = max(1, n_s // n_p)
    return PeriodicTrajectory(rk4_samples(sys, x, omega, n_p, substeps), omega)

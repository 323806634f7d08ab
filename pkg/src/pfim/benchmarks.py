"""Catalog of benchmark oscillators.

Second-order single-DOF models use the state ``(x, xdot)``; the finite-element
beam uses ``(X, Xdot)`` with 18 displacement DOFs. All forcing terms are
written in scaled time, so ``cos(omega t)`` becomes ``cos(tau)``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import CatalogError, ParameterError
from .system import TWO_PI, SystemModel

__all__ = [
    "CATALOG",
    "make_system",
    "linear_part",
    "default_omega",
    "initial_guess",
    "square_wave",
    "FeBeamAssembly",
    "assemble_fe_beam",
    "beam_element_matrices",
    "natural_frequencies",
    "rayleigh_coefficients",
    "fe_nonlinear_force",
]


def square_wave(t, T):
    """Unit on-off wave: 1 on ``[0, T/2)``, 0 on ``[T/2, T)``, T-periodic."""
    if not T > 0:
        raise ParameterError("square-wave period must be positive")
    phase = np.mod(t, T)
    return np.where(phase < 0.5 * T, 1.0, 0.0)


def _pack2(first, second):
    """Stack two broadcastable component arrays into ``(..., 2)``."""
    out = np.empty(np.broadcast_shapes(np.shape(first), np.shape(second)) + (2,))
    out[..., 0] = first
    out[..., 1] = second
    return out


def _sdof(name, p, restoring, d_restoring, forcing, switching=None, smoothness="smooth"):
    """Build ``xddot + c xdot + k x + g(x, xdot) = forcing(tau)`` as a SystemModel."""
    c, k = p["c"], p["k"]

    def rhs(x, tau, omega):
        x1, x2 = x[..., 0], x[..., 1]
        return _pack2(x2, -c * x2 - k * x1 - restoring(x1, x2) + forcing(tau))

    def jacobian(x, tau, omega):
        x1, x2 = x[..., 0], x[..., 1]
        g1, g2 = d_restoring(x1, x2)
        J = np.zeros(x.shape + (2,))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -k - g1
        J[..., 1, 1] = -c - g2
        return J

    return SystemModel(
        dim=2,
        rhs=rhs,
        jacobian=jacobian,
        autonomous=False,
        name=name,
        params=dict(p),
        switching=switching,
        smoothness=smoothness,
    )


def _zero(x1, x2):
    return np.zeros(np.broadcast(x1, x2).shape)


def _vanderpol(p):
    mu = p["mu"]

    def rhs(x, tau, omega):
        x1, x2 = x[..., 0], x[..., 1]
        return _pack2(x2, -x1 - mu * (x1 * x1 - 1.0) * x2)

    def jacobian(x, tau, omega):
        x1, x2 = x[..., 0], x[..., 1]
        J = np.zeros(x.shape + (2,))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -1.0 - 2.0 * mu * x1 * x2
        J[..., 1, 1] = -mu * (x1 * x1 - 1.0)
        return J

    return SystemModel(2, rhs, jacobian, autonomous=True, name="vanderpol", params=dict(p))


def _duffing(p):
    k3, F = p["k3"], p["F"]
    return _sdof(
        "duffing",
        p,
        lambda x1, x2: k3 * x1**3,
        lambda x1, x2: (3.0 * k3 * x1**2, _zero(x1, x2)),
        lambda tau: F * np.cos(tau),
    )


def _quad_drag(p):
    cq, F = p["cq"], p["F"]
    return _sdof(
        "quad-drag",
        p,
        lambda x1, x2: cq * x2 * np.abs(x2),
        lambda x1, x2: (_zero(x1, x2), 2.0 * cq * np.abs(x2)),
        lambda tau: F * np.cos(tau),
        switching=lambda x, tau: x[..., 1:2],
        smoothness="C1",
    )


def _abs_spring(p):
    ka, F = p["ka"], p["F"]
    return _sdof(
        "abs-spring",
        p,
        lambda x1, x2: ka * np.abs(x1),
        lambda x1, x2: (ka * np.where(x1 >= 0.0, 1.0, -1.0), _zero(x1, x2)),
        lambda tau: F * np.cos(tau),
        switching=lambda x, tau: x[..., 0:1],
        smoothness="C0",
    )


def _coulomb(p):
    fr, F = p["friction"], p["F"]
    return _sdof(
        "coulomb",
        p,
        lambda x1, x2: fr * np.sign(x2),
        lambda x1, x2: (_zero(x1, x2), _zero(x1, x2)),
        lambda tau: F * np.cos(tau),
        switching=lambda x, tau: x[..., 1:2],
        smoothness="C-1",
    )


def heaviside_switch(x1, x2):
    """``G(x, xdot) = 2 xdot H(-xdot) + 10 x`` with ``H(0) = 0``."""
    return 2.0 * x2 * (x2 < 0.0) + 10.0 * x1


def heaviside_force(x1, x2, a=2.0, b=10.0):
    """Piecewise force ``a xdot + b x`` where ``G >= 0``, else 0."""
    return np.where(heaviside_switch(x1, x2) >= 0.0, a * x2 + b * x1, 0.0)


def _heaviside_piecewise(p):
    a, b, F = p["a"], p["b"], p["F"]

    def d_force(x1, x2):
        on = heaviside_switch(x1, x2) >= 0.0
        return np.where(on, b, 0.0), np.where(on, a, 0.0)

    return _sdof(
        "heaviside-piecewise",
        p,
        lambda x1, x2: heaviside_force(x1, x2, a, b),
        d_force,
        lambda tau: F * np.cos(tau),
        switching=lambda x, tau: np.stack(
            [heaviside_switch(x[..., 0], x[..., 1]), x[..., 1]], axis=-1
        ),
        smoothness="C-1",
    )


def _square_wave_system(p):
    k3, F = p["k3"], p["F"]
    return _sdof(
        "square-wave",
        p,
        lambda x1, x2: k3 * x1**3,
        lambda x1, x2: (3.0 * k3 * x1**2, _zero(x1, x2)),
        # one forcing period T maps onto tau in [0, 2 pi)
        lambda tau: F * square_wave(tau, TWO_PI),
        smoothness="C-1-forcing",
    )


# ---------------------------------------------------------------------------
# finite-element cantilever


BEAM_LENGTH = 8.0
BEAM_WIDTH = 0.02
BEAM_HEIGHT = 0.2
BEAM_E = 3e9
BEAM_RHO = 7800.0
BEAM_ELEMENTS = 9
NL_DOF = 7  # y5, 1-based in the reduced DOF vector
EXC_DOF = 17  # y10


@dataclass(frozen=True)
class FeBeamAssembly:
    M: np.ndarray
    C: np.ndarray
    K: np.ndarray
    alpha: float
    beta: float
    nl_dof: int = NL_DOF
    exc_dof: int = EXC_DOF


def beam_element_matrices(E=BEAM_E, rho=BEAM_RHO, b=BEAM_WIDTH, h=BEAM_HEIGHT, Le=None):
    """Euler-Bernoulli element stiffness and consistent mass, DOFs (y1, th1, y2, th2)."""
    if Le is None:
        Le = BEAM_LENGTH / BEAM_ELEMENTS
    A = b * h
    I = b * h**3 / 12.0
    ke = (E * I / Le**3) * np.array(
        [
            [12.0, 6 * Le, -12.0, 6 * Le],
            [6 * Le, 4 * Le**2, -6 * Le, 2 * Le**2],
            [-12.0, -6 * Le, 12.0, -6 * Le],
            [6 * Le, 2 * Le**2, -6 * Le, 4 * Le**2],
        ]
    )
    me = (rho * A * Le / 420.0) * np.array(
        [
            [156.0, 22 * Le, 54.0, -13 * Le],
            [22 * Le, 4 * Le**2, 13 * Le, -3 * Le**2],
            [54.0, 13 * Le, 156.0, -22 * Le],
            [-13 * Le, -3 * Le**2, -22 * Le, 4 * Le**2],
        ]
    )
    return ke, me


def natural_frequencies(M, K):
    """Undamped natural frequencies (rad/s), ascending."""
    return np.sqrt(scipy.linalg.eigh(K, M, eigvals_only=True))


def rayleigh_coefficients(zeta, w1, w2):
    """Mass and stiffness proportional factors giving ratio ``zeta`` at ``w1`` and ``w2``."""
    return 2.0 * zeta * w1 * w2 / (w1 + w2), 2.0 * zeta / (w1 + w2)


def assemble_fe_beam(alpha=0.362, beta=5.23e-4, E=BEAM_E):
    """Assemble the clamped 9-element beam and its Rayleigh damping matrix.

    ``alpha`` and ``beta`` default to 2 % damping at 10.49 and 65.97 rad/s;
    these do not follow from the natural frequencies of the assembled model
    (see :func:`natural_frequencies`).
    """
    ke, me = beam_element_matrices(E=E)
    ndof = 2 * (BEAM_ELEMENTS + 1)
    K = np.zeros((ndof, ndof))
    M = np.zeros((ndof, ndof))
    for e in range(BEAM_ELEMENTS):
        s = slice(2 * e, 2 * e + 4)
        K[s, s] += ke
        M[s, s] += me
    K, M = K[2:, 2:], M[2:, 2:]
    return FeBeamAssembly(M=M, C=alpha * M + beta * K, K=K, alpha=alpha, beta=beta)


def fe_nonlinear_force(y5, beta1=1e6, k2=5e3, delta=0.01):
    """Cubic spring plus one-sided gap spring acting on ``y5``."""
    y5 = np.asarray(y5, dtype=float)
    gap = np.where(y5 < -delta, k2 * (y5 + delta), 0.0)
    return beta1 * y5**3 + gap


def _fe_beam(p):
    asm = assemble_fe_beam(p["alpha"], p["beta"], p["E"])
    beta1, k2, delta, F0 = p["beta1"], p["k2"], p["delta"], p["F0"]
    n = asm.M.shape[0]
    lu = scipy.linalg.lu_factor(asm.M)
    MinvK = scipy.linalg.lu_solve(lu, asm.K)
    MinvC = scipy.linalg.lu_solve(lu, asm.C)
    jnl, jex = asm.nl_dof - 1, asm.exc_dof - 1
    minv_nl = scipy.linalg.lu_solve(lu, np.eye(n)[jnl])
    minv_ex = scipy.linalg.lu_solve(lu, np.eye(n)[jex])

    # linear part of the first-order form, [[0, I], [-M^-1 K, -M^-1 C]]
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = -MinvK
    A[n:, n:] = -MinvC
    At = A.T.copy()
    b_nl = np.concatenate([np.zeros(n), minv_nl])
    b_ex = np.concatenate([np.zeros(n), minv_ex])

    def rhs(x, tau, omega):
        fnl = fe_nonlinear_force(x[..., jnl], beta1, k2, delta)
        force = F0 * np.sin(tau)
        return x @ At - fnl[..., None] * b_nl + np.asarray(force)[..., None] * b_ex

    def jacobian(x, tau, omega):
        y5 = x[..., jnl]
        kt = 3.0 * beta1 * y5**2 + np.where(y5 < -delta, k2, 0.0)
        J = np.zeros(x.shape + (2 * n,))
        J[..., :n, n:] = np.eye(n)
        J[..., n:, :n] = -MinvK
        J[..., n:, jnl] -= kt[..., None] * minv_nl
        J[..., n:, n:] = -MinvC
        return J

    return SystemModel(
        dim=2 * n,
        rhs=rhs,
        jacobian=jacobian,
        autonomous=False,
        name="fe-beam",
        observed=jex,
        params=dict(p),
        switching=lambda x, tau: x[..., jnl : jnl + 1] + delta,
        smoothness="C0",
    )


@dataclass(frozen=True)
class _Entry:
    builder: object
    defaults: dict
    linear_zero: tuple
    guess: str
    smoothness: str


CATALOG = {
    "vanderpol": _Entry(_vanderpol, {"mu": 0.9, "omega": 1.0}, ("mu",), "cosine", "smooth"),
    "duffing": _Entry(
        _duffing, {"c": 0.1, "k": 1.0, "k3": 0.1, "F": 1.0, "omega": 1.0}, ("k3",), "linear", "smooth"
    ),
    "quad-drag": _Entry(
        _quad_drag, {"c": 0.05, "k": 1.0, "cq": 0.5, "F": 0.2, "omega": 1.0}, ("cq",), "linear", "C1"
    ),
    "abs-spring": _Entry(
        _abs_spring, {"c": 0.05, "k": 1.0, "ka": 0.5, "F": 0.2, "omega": 1.0}, ("ka",), "linear", "C0"
    ),
    "coulomb": _Entry(
        _coulomb,
        {"c": 0.05, "k": 1.0, "friction": 0.02, "F": 0.2, "omega": 1.0},
        ("friction",),
        "linear",
        "C-1",
    ),
    "heaviside-piecewise": _Entry(
        _heaviside_piecewise,
        {"c": 0.05, "k": 1.0, "a": 2.0, "b": 10.0, "F": 0.2, "omega": 3.0},
        ("a", "b"),
        "linear",
        "C-1",
    ),
    "square-wave": _Entry(
        _square_wave_system,
        {"c": 0.05, "k": 1.0, "k3": 0.1, "F": 0.2, "T": 4.0 * np.pi, "omega": 0.5},
        ("k3",),
        "linear",
        "C-1-forcing",
    ),
    "fe-beam": _Entry(
        _fe_beam,
        {
            "beta1": 1e6,
            "k2": 5e3,
            "delta": 0.01,
            "F0": 100.0,
            "omega": 1.0,
            "alpha": 0.362,
            "beta": 5.23e-4,
            "E": BEAM_E,
        },
        ("beta1", "k2"),
        "linear",
        "C0",
    ),
}


def _resolve(name, overrides):
    if name not in CATALOG:
        raise CatalogError(f"unknown system {name!r}; choose from {sorted(CATALOG)}")
    entry = CATALOG[name]
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(entry.defaults)
    if unknown:
        raise ParameterError(f"{name}: unknown parameter(s) {sorted(unknown)}")
    params = dict(entry.defaults)
    params.update({k: float(v) for k, v in overrides.items()})
    if name == "square-wave" and "T" in overrides and "omega" not in overrides:
        params["omega"] = TWO_PI / params["T"]
    return entry, params


def make_system(name, overrides=None):
    """Build catalog system ``name`` with optional parameter overrides."""
    entry, params = _resolve(name, overrides)
    return entry.builder(params)


def linear_part(name, overrides=None):
    """The same system with its nonlinear coefficients set to zero."""
    entry, params = _resolve(name, overrides)
    for key in entry.linear_zero:
        params[key] = 0.0
    sys = entry.builder(params)
    return sys


def default_omega(name, overrides=None):
    return _resolve(name, overrides)[1]["omega"]


def initial_guess(name, n_p, overrides=None, omega=None):
    """Starting trajectory following each benchmark's recipe.

    ``cosine``: ``x = cos(tau)``, ``xdot = -omega sin(tau)`` (self-excited case).
    ``linear``: periodic response of the system with its nonlinearity removed.
    """
    from .pfim import PeriodicTrajectory, linear_periodic_solution

    entry, params = _resolve(name, overrides)
    if omega is None:
        omega = params["omega"]
    if entry.guess == "cosine":
        return PeriodicTrajectory.from_function(
            lambda t: np.stack([np.cos(t), -omega * np.sin(t)], axis=-1), n_p, omega
        )
    return linear_periodic_solution(linear_part(name, overrides), n_p, omega)

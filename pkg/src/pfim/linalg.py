"""Dense small-matrix kernels.

Everything here works on plain ``numpy`` arrays. ``mat_exp`` and ``phi1`` also
accept stacks of matrices with shape ``(..., n, n)`` so that all interval
propagators of a grid can be formed in one vectorised call.
"""

import numpy as np
from scipy.linalg import matrix_balance

from .errors import ConvergenceError, DimensionError, DomainError, SingularSystemError

__all__ = ["mat_exp", "phi1", "exp_and_phi1", "solve_dense", "eigenvalues"]

_SCALED_NORM = 0.5
_TAYLOR_TERMS = 13


def _check_square(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    if A.shape[-1] < 1:
        raise DimensionError(f"{name} must have at least one row")
    if not np.all(np.isfinite(A)):
        raise DomainError(f"{name} has non-finite entries")
    return A


def _psi_polynomial(B, m):
    """``sum_{j<m} B^j / (j+1)!`` by Paterson-Stockmeyer blocking."""
    n = B.shape[-1]
    eye = np.broadcast_to(np.eye(n), B.shape)
    s = max(1, int(np.ceil(np.sqrt(m))))
    powers = [eye, B]
    for _ in range(2, s + 1):
        powers.append(powers[-1] @ B)
    coef = 1.0 / np.cumprod(np.arange(1, m + 1, dtype=float))  # 1/(j+1)!

    def block(start):
        out = np.zeros(B.shape)
        for j in range(start, min(start + s, m)):
            out = out + coef[j] * powers[j - start]
        return out

    starts = list(range(0, m, s))
    psi = block(starts[-1])
    for start in reversed(starts[:-1]):
        psi = block(start) + powers[s] @ psi
    return psi


def _exp_phi1_core(A, max_term):
    """Return ``(exp(A), psi(A))`` with ``psi(A) = sum_k A^k / (k+1)!``.

    Scaling and squaring: each matrix of the stack is scaled by its own power
    of two so that its 1-norm is at most 0.5, a Taylor polynomial is
    applied, then the doubling formulas

        exp(2B) = exp(B)^2,     psi(2B) = (I + exp(B)) psi(B) / 2

    undo the scaling.
    """
    n = A.shape[-1]
    eye = np.eye(n)
    norms = np.abs(A).sum(axis=-2).max(axis=-1)
    with np.errstate(divide="ignore"):
        ratio = np.log2(np.where(norms > _SCALED_NORM, norms, _SCALED_NORM) / _SCALED_NORM)
    squarings = np.ceil(ratio).astype(int)
    B = A / np.ldexp(1.0, squarings)[..., None, None]

    psi = _psi_polynomial(B, max_term)
    E = eye + B @ psi

    jmax = int(squarings.max()) if squarings.size else 0
    for k in range(jmax):
        active = (squarings > k)[..., None, None]
        psi = np.where(active, 0.5 * ((eye + E) @ psi), psi)
        E = np.where(active, E @ E, E)
    return E, psi


def mat_exp(A, max_term=_TAYLOR_TERMS):
    """Matrix exponential by scaling and squaring of a truncated Taylor series.

    Parameters
    ----------
    A : array_like, shape (..., n, n)
    max_term : int
        Highest power kept in the Taylor polynomial of the scaled matrix.
    """
    A = _check_square(A)
    if max_term < 1:
        raise DomainError("max_term must be >= 1")
    return _exp_phi1_core(A, max_term)[0]


def phi1(A, dt):
    """Return ``int_0^dt exp(A (dt - s)) ds``, i.e. ``(exp(A dt) - I) A^{-1}``.

    Evaluated from the power series, so singular ``A`` is fine.
    """
    return exp_and_phi1(A, dt)[1]


def _balancing(A):
    """Power-of-two diagonal ``d`` shared by a stack, shrinking its norms."""
    mean_abs = np.abs(A.reshape(-1, *A.shape[-2:])).mean(axis=0)
    _, (d, _) = matrix_balance(mean_abs, permute=False, separate=True)
    return d


def exp_and_phi1(A, dt, balance=True):
    """Both ``exp(A dt)`` and ``phi1(A, dt)`` from one scaled evaluation.

    With ``balance`` the stack is first transformed by one exact diagonal
    similarity, which cuts the number of squarings for badly scaled
    matrices (mass-stiffness blocks) without changing the result.
    """
    A = _check_square(A)
    if not dt > 0:
        raise DomainError(f"time step must be positive, got {dt}")
    if balance and A.shape[-1] > 1:
        d = _balancing(A)
        ratio = d[None, :] / d[:, None]
        E, psi = _exp_phi1_core(A * dt * ratio, _TAYLOR_TERMS)
        return E / ratio, dt * psi / ratio
    E, psi = _exp_phi1_core(A * dt, _TAYLOR_TERMS)
    return E, dt * psi


def solve_dense(A, b):
    """Solve ``A x = b`` by Gaussian elimination with partial pivoting.

    Raises
    ------
    SingularSystemError
        If a pivot falls below ``1e-14 * max|A|``; ``pivot_index`` names the
        elimination column.
    """
    A = _check_square(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or b.shape[0] != n:
        raise DimensionError(f"cannot solve {A.shape} system with rhs {b.shape}")
    if not np.all(np.isfinite(b)):
        raise DomainError("right-hand side has non-finite entries")

    U = A.copy()
    y = b.copy()
    threshold = 1e-14 * np.abs(A).max()
    for k in range(n):
        p = k + int(np.argmax(np.abs(U[k:, k])))
        if not abs(U[p, k]) > threshold:
            raise SingularSystemError(f"matrix is numerically singular at pivot {k}", k)
        if p != k:
            U[[k, p]] = U[[p, k]]
            y[[k, p]] = y[[p, k]]
        factors = U[k + 1:, k] / U[k, k]
        U[k + 1:, k:] -= np.multiply.outer(factors, U[k, k:])
        y[k + 1:] -= np.multiply.outer(factors, y[k]) if y.ndim > 1 else factors * y[k]

    x = np.empty_like(y)
    for k in range(n - 1, -1, -1):
        x[k] = (y[k] - U[k, k + 1:] @ x[k + 1:]) / U[k, k]
    return x


def _hessenberg(A):
    """Householder reduction to upper Hessenberg form (similarity)."""
    H = A.copy()
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        v[0] += np.copysign(alpha, x[0])
        v /= np.linalg.norm(v)
        H[k + 1:, k:] -= 2.0 * np.outer(v, v @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H


def _reflect(H, v, rows, cols):
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return
    v = v / nv
    H[rows, cols] -= 2.0 * np.outer(v, v @ H[rows, cols])


def _reflect_right(H, v, rows, cols):
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return
    v = v / nv
    H[rows, cols] -= 2.0 * np.outer(H[rows, cols] @ v, v)


def _householder_vector(x):
    v = np.array(x, dtype=float)
    alpha = np.linalg.norm(v)
    if alpha == 0.0:
        return v
    v[0] += np.copysign(alpha, v[0])
    return v


def _francis_step(H, lo, hi, s, t):
    """One implicit double-shift QR sweep on the active block ``H[lo:hi+1, lo:hi+1]``."""
    x = H[lo, lo] ** 2 + H[lo, lo + 1] * H[lo + 1, lo] - s * H[lo, lo] + t
    y = H[lo + 1, lo] * (H[lo, lo] + H[lo + 1, lo + 1] - s)
    z = H[lo + 1, lo] * H[lo + 2, lo + 1]
    end = hi + 1
    for k in range(lo, hi - 1):
        v = _householder_vector([x, y, z])
        c0 = max(lo, k - 1)
        _reflect(H, v, slice(k, k + 3), slice(c0, end))
        r1 = min(k + 4, hi + 1)
        _reflect_right(H, v, slice(lo, r1), slice(k, k + 3))
        x = H[k + 1, k]
        y = H[k + 2, k]
        if k < hi - 2:
            z = H[k + 3, k]
    v = _householder_vector([x, y])
    _reflect(H, v, slice(hi - 1, hi + 1), slice(hi - 2, end))
    _reflect_right(H, v, slice(lo, hi + 1), slice(hi - 1, hi + 1))


def _eig2(a, b, c, d):
    half_tr = 0.5 * (a + d)
    disc = (0.5 * (a - d)) ** 2 + b * c
    if disc >= 0.0:
        r = np.sqrt(disc)
        # avoid cancellation in the smaller root
        big = half_tr + np.copysign(r, half_tr) if half_tr != 0.0 else r
        det = a * d - b * c
        small = det / big if big != 0.0 else half_tr - r
        return complex(big), complex(small)
    r = np.sqrt(-disc)
    return complex(half_tr, r), complex(half_tr, -r)


def eigenvalues(A):
    """All eigenvalues of a real square matrix.

    Hessenberg reduction followed by Francis double-shift QR with deflation.
    Complex eigenvalues come out in exact conjugate pairs.

    Raises
    ------
    ConvergenceError
        When more than ``30 * n`` QR sweeps are needed.
    """
    A = _check_square(A)
    if A.ndim != 2:
        raise DimensionError("eigenvalues expects a single matrix")
    n = A.shape[0]
    H = _hessenberg(A)
    eps = np.finfo(float).eps
    anorm = max(np.abs(H).sum(), np.finfo(float).tiny)
    out = []
    budget = 30 * n
    sweeps = 0
    since_deflation = 0
    hi = n - 1
    while hi >= 0:
        lo = hi
        while lo > 0:
            scale = abs(H[lo - 1, lo - 1]) + abs(H[lo, lo])
            if scale == 0.0:
                scale = anorm
            if abs(H[lo, lo - 1]) <= eps * scale:
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            out.append(complex(H[hi, hi]))
            hi -= 1
            since_deflation = 0
        elif lo == hi - 1:
            out.extend(_eig2(H[lo, lo], H[lo, hi], H[hi, lo], H[hi, hi]))
            hi -= 2
            since_deflation = 0
        else:
            sweeps += 1
            since_deflation += 1
            if sweeps > budget:
                raise ConvergenceError(f"QR iteration did not converge in {budget} sweeps")
            if since_deflation % 10 == 0:
                w = abs(H[hi, hi - 1]) + abs(H[hi - 1, hi - 2])
                s, t = 1.5 * w, w * w
            else:
                s = H[hi - 1, hi - 1] + H[hi, hi]
                t = H[hi - 1, hi - 1] * H[hi, hi] - H[hi - 1, hi] * H[hi, hi - 1]
            _francis_step(H, lo, hi, s, t)
    return np.array(out[::-1], dtype=complex)

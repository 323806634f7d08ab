import mpmath
import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from pfim.errors import DimensionError, DomainError, SingularSystemError
from pfim.linalg import eigenvalues, exp_and_phi1, mat_exp, phi1, solve_dense

PROPS = settings(max_examples=100, deadline=None)


def random_matrix(seed, n, norm):
    A = np.random.default_rng(seed).standard_normal((n, n))
    return A * norm / np.abs(A).sum(axis=0).max()


matrices = st.builds(
    random_matrix,
    st.integers(0, 2**32 - 1),
    st.integers(1, 6),
    st.floats(0.01, 5.0),
)


# examples

def test_exp_zero_is_identity():
    assert np.array_equal(mat_exp(np.zeros((2, 2))), np.eye(2))


def test_exp_diagonal():
    np.testing.assert_allclose(mat_exp(np.diag([1.0, -1.0])), np.diag([np.e, 1 / np.e]), rtol=1e-14)


def test_exp_rotation_generator():
    th = np.pi / 2
    E = mat_exp(np.array([[0.0, th], [-th, 0.0]]))
    np.testing.assert_allclose(E, [[0.0, 1.0], [-1.0, 0.0]], atol=1e-14)


def test_exp_rejects_bad_input():
    with pytest.raises(DimensionError):
        mat_exp(np.zeros((2, 3)))
    with pytest.raises(DomainError):
        mat_exp(np.array([[np.nan]]))


def test_phi1_examples():
    np.testing.assert_allclose(phi1(np.zeros((2, 2)), 0.5), 0.5 * np.eye(2), rtol=1e-15)
    np.testing.assert_allclose(phi1(np.array([[2.0]]), 1.0), [[(np.e**2 - 1) / 2]], rtol=1e-14)
    np.testing.assert_allclose(
        phi1(np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0), [[1.0, 0.5], [0.0, 1.0]], atol=1e-15
    )


def test_phi1_rejects_nonpositive_step():
    with pytest.raises(DomainError):
        phi1(np.eye(2), 0.0)


def test_solve_examples():
    np.testing.assert_allclose(solve_dense(np.eye(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])
    np.testing.assert_allclose(solve_dense(np.diag([2.0, 4.0]), [2.0, 2.0]), [1.0, 0.5])
    with pytest.raises(SingularSystemError) as info:
        solve_dense(np.ones((2, 2)), [1.0, 0.0])
    assert info.value.pivot_index == 1


def test_solve_rejects_mismatched_rhs():
    with pytest.raises(DimensionError):
        solve_dense(np.eye(3), [1.0, 2.0])


def test_eigenvalue_examples():
    np.testing.assert_allclose(np.sort(eigenvalues(np.diag([1.0, 2.0, 3.0])).real), [1, 2, 3], atol=1e-12)
    ev = eigenvalues(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    np.testing.assert_allclose(sorted(ev, key=lambda z: z.imag), [-1j, 1j], atol=1e-12)
    np.testing.assert_allclose(eigenvalues(np.array([[2.0, 1.0], [0.0, 2.0]])), [2.0, 2.0], atol=1e-7)


# oracle: 30-digit expm from mpmath (scipy's expm is itself only ~1e-12 here)

def expm_mp(A):
    with mpmath.workdps(30):
        return np.array(mpmath.expm(mpmath.matrix(A.tolist())).tolist(), dtype=float)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.floats(0.01, 10.0))
def test_exp_relative_error(seed, n, norm):
    A = random_matrix(seed, n, norm)
    ref = expm_mp(A)
    assert np.linalg.norm(mat_exp(A) - ref, 1) <= 1e-13 * np.linalg.norm(ref, 1)


@pytest.mark.parametrize("a", [0.5, 1.0, 4.0, 8.0, 10.0, -8.0])
def test_exp_scalar_at_squaring_boundaries(a):
    assert abs(mat_exp(np.array([[a]]))[0, 0] / np.exp(a) - 1) <= 1e-13


def test_stacked_exp_matches_single():
    A = np.stack([random_matrix(s, 4, 3.0) for s in range(5)])
    E = mat_exp(A)
    for k in range(5):
        np.testing.assert_allclose(E[k], mat_exp(A[k]), rtol=1e-15, atol=1e-15)


@PROPS
@given(matrices, st.floats(1e-3, 1.0))
def test_balanced_pair_matches_unbalanced(A, dt):
    E1, W1 = exp_and_phi1(A, dt, balance=True)
    E2, W2 = exp_and_phi1(A, dt, balance=False)
    np.testing.assert_allclose(E1, E2, atol=1e-12 * np.abs(E2).max())
    np.testing.assert_allclose(W1, W2, atol=1e-12 * np.abs(W2).max())


def test_balancing_badly_scaled_stack():
    # mass-stiffness style block with a 1e6 spread
    rng = np.random.default_rng(3)
    A = np.zeros((4, 4))
    A[:2, 2:] = np.eye(2)
    A[2:, :2] = -1e4 * (1 + rng.random((2, 2)))
    A[2:, 2:] = -0.1 * rng.random((2, 2))
    E, W = exp_and_phi1(A, 1e-3)
    ref = scipy.linalg.expm(A * 1e-3)
    np.testing.assert_allclose(E, ref, atol=1e-12 * np.abs(ref).max())
    np.testing.assert_allclose(W @ A + np.eye(4), ref, atol=1e-10 * np.abs(ref).max())


# properties

@PROPS
@given(matrices)
def test_exp_inverse(A):
    np.testing.assert_allclose(mat_exp(A) @ mat_exp(-A), np.eye(len(A)), atol=1e-10)


@PROPS
@given(matrices, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_exp_semigroup(A, s, t):
    lhs = mat_exp(A * (s + t))
    rhs = mat_exp(A * s) @ mat_exp(A * t)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * max(1.0, np.abs(lhs).max()))


@PROPS
@given(matrices, st.floats(1e-3, 1.0))
def test_phi1_consistency(A, dt):
    if np.linalg.cond(A) > 1e6:
        return
    lhs = phi1(A, dt) @ A + np.eye(len(A))
    np.testing.assert_allclose(lhs, mat_exp(A * dt), atol=1e-10)


@PROPS
@given(matrices)
def test_spectral_mapping(A):
    lam, V = np.linalg.eig(A)
    if np.linalg.cond(V) > 1e4:  # keep to well-conditioned eigenbases
        return
    mu = eigenvalues(mat_exp(A))
    expected = np.exp(lam)
    dist = np.abs(mu[:, None] - expected[None, :])
    assert dist.min(axis=1).max() <= 1e-7 * max(1.0, np.abs(expected).max())
    assert dist.min(axis=0).max() <= 1e-7 * max(1.0, np.abs(expected).max())


@PROPS
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_solve_residual(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + n * np.eye(n) * rng.random()
    b = rng.standard_normal(n)
    if np.linalg.cond(A) > 1e10:
        return
    x = solve_dense(A, b)
    bound = 1e-10 * (np.abs(A).sum(axis=1).max() * np.abs(x).max() + np.abs(b).max())
    assert np.abs(A @ x - b).max() <= bound


@PROPS
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_eigenvalues_match_lapack_and_conjugate_closure(seed, n):
    A = np.random.default_rng(seed).standard_normal((n, n))
    ev = eigenvalues(A)
    assert ev.shape == (n,)
    ref = np.linalg.eigvals(A)
    scale = max(1.0, np.abs(A).max())
    assert np.abs(ev[:, None] - ref[None, :]).min(axis=1).max() <= 1e-7 * scale
    for z in ev[np.abs(ev.imag) > 1e-8]:
        assert np.abs(ev - np.conj(z)).min() <= 1e-8 * scale

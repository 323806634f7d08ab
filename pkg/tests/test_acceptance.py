"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

Tolerances are the stated ones. A criterion that fails here is reported as
failing, not relaxed.
"""

import time

import numpy as np
import pytest

from conftest import random_stable_system, report, transitions
from pfim import PeriodicTrajectory, PfimConfig, initial_guess, make_system, pfim_solve
from pfim.benchmarks import heaviside_force, linear_part
from pfim.cli import main
from pfim.continuation import floquet
from pfim.linalg import eigenvalues, mat_exp, phi1, solve_dense
from pfim.pfim import operators_at
from pfim.reference import (
    HbmConfig,
    ShootingConfig,
    hbm_linear_guess,
    hbm_solve,
    shooting_solve,
    shooting_trajectory,
    steady_state_reference,
)
from pfim.studies import (
    convergence_study,
    grid_error,
    grid_force_overshoot,
    hbm_force_overshoot,
    one_step_order,
    order_from_iterations,
    reference_solution,
)
from pfim.system import TWO_PI


def _fmt(x):
    return "%.3g" % x


# 1 -------------------------------------------------------------------------


def test_criterion_01_lti_one_step():
    n_p = 2**10
    cfg = PfimConfig(n_p=n_p, max_iter=1, tol_a=1e-300, tol_r=1e-300)
    worst_ea = worst_err = 0.0
    t0 = time.perf_counter()
    for seed in range(20):
        sys, omega, exact = random_stable_system(seed)
        guess = PeriodicTrajectory(np.zeros((n_p + 1, sys.dim)), omega)
        res = pfim_solve(sys, guess, "forced", cfg)
        worst_ea = max(worst_ea, res.history[-1].e_a)
        traj = res.trajectory
        worst_err = max(worst_err, float(np.abs(traj.samples - exact(traj.tau)).max()))
    elapsed = time.perf_counter() - t0
    ok = worst_ea <= 1e-8 and worst_err <= 1e-7 and elapsed < 10
    detail = f"max e_a {_fmt(worst_ea)} (<= 1e-8), max error {_fmt(worst_err)} (<= 1e-7), {elapsed:.1f} s (< 10)"
    assert report(1, "LTI one-iteration exactness", ok, detail)


# 2 -------------------------------------------------------------------------


def test_criterion_02_vanderpol():
    sys = make_system("vanderpol")
    n_p = 2**12
    t0 = time.perf_counter()
    study = convergence_study(sys, initial_guess("vanderpol", n_p), cfg=PfimConfig(n_p=n_p))
    elapsed = time.perf_counter() - t0
    ref_sol = shooting_solve(sys, [2.0, 0.0], TWO_PI / 0.95, ShootingConfig(n_s=2**14))
    d_omega = abs(study.omega - ref_sol.omega)
    final = study.records[-1].error
    iterations = study.records[-1].iteration
    ok = (
        study.converged
        and iterations <= 10
        and 1.7 <= study.order <= 2.3
        and d_omega <= 1e-8
        and final <= 1e-8
        and elapsed < 30
    )
    detail = (
        f"converged={study.converged} in {iterations} (<= 10), order {study.order:.2f} in [1.7, 2.3], "
        f"|d omega| {_fmt(d_omega)} (<= 1e-8), error {_fmt(final)} (<= 1e-8), {elapsed:.1f} s (< 30)"
    )
    assert report(2, "Van der Pol quadratic convergence", ok, detail)


# 3, 4 ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def nonsmooth_studies():
    """Convergence studies at 2^12 (shooting reference) for the non-smooth models."""
    n_p = 2**12
    out = {}
    for name in ("quad-drag", "abs-spring", "coulomb", "square-wave"):
        sys = make_system(name)
        t0 = time.perf_counter()
        study = convergence_study(sys, initial_guess(name, n_p), cfg=PfimConfig(n_p=n_p, max_iter=20))
        out[name] = (sys, study, time.perf_counter() - t0)
    return out


def test_criterion_03_smoothness_ordering(nonsmooth_studies):
    t0 = time.perf_counter()
    orders, plateaus = {}, {}
    for name in ("quad-drag", "abs-spring", "coulomb"):
        sys, study, _ = nonsmooth_studies[name]
        orders[name] = one_step_order(sys, study.reference, n_seeds=8)[0]
        plateaus[name] = study.plateau
    elapsed = time.perf_counter() - t0 + sum(nonsmooth_studies[n][2] for n in orders)
    ok = (
        orders["quad-drag"] >= 1.7
        and 1.0 < orders["abs-spring"] < 2.0
        and 0.8 <= orders["coulomb"] <= 1.3
        and plateaus["quad-drag"] < plateaus["abs-spring"] < plateaus["coulomb"]
        and elapsed < 60
    )
    detail = (
        "orders " + ", ".join(f"{k} {v:.2f}" for k, v in orders.items())
        + "; plateaus " + " < ".join(f"{_fmt(v)}" for v in plateaus.values())
        + f"; {elapsed:.1f} s (< 60)"
    )
    assert report(3, "smoothness-ordered convergence", ok, detail)


def test_criterion_04_square_wave(nonsmooth_studies):
    sys, study, _ = nonsmooth_studies["square-wave"]
    n_p = 2**14
    ref, _ = reference_solution(sys, n_p, study.omega, study.trajectory.x0, "shooting", n_s=2**14)
    order = one_step_order(sys, ref, n_seeds=8)[0]
    coulomb = nonsmooth_studies["coulomb"][1].plateau
    decades = abs(np.log10(study.plateau / coulomb))
    ok = order >= 1.5 and decades <= 1.0
    detail = (
        f"order {order:.2f} (>= 1.5); plateau {_fmt(study.plateau)} vs coulomb {_fmt(coulomb)}: "
        f"{decades:.2f} decades (<= 1)"
    )
    assert report(4, "square-wave forcing", ok, detail)


# 5 -------------------------------------------------------------------------


def test_criterion_05_duffing_continuation(duffing_sweep):
    branch, _, elapsed = duffing_sweep
    omega = np.array([p.omega for p in branch])
    turns = [i for i in range(1, len(omega) - 1) if (omega[i] - omega[i - 1]) * (omega[i + 1] - omega[i]) < 0]
    triple = False
    if len(turns) >= 2:
        mid = 0.5 * (omega[turns[0]] + omega[turns[1]])
        triple = int(np.sum(np.diff(np.sign(omega - mid)) != 0)) == 3
    pattern = [branch[0].stable]
    for p in branch[1:]:
        if p.stable != pattern[-1]:
            pattern.append(p.stable)

    def real_gap(p):
        real = p.multipliers[np.abs(p.multipliers.imag) < 1e-8].real
        return float(np.abs(real - 1.0).min()) if real.size else np.inf

    gaps = [max(real_gap(a), real_gap(b)) for a, b in transitions(branch)]
    ok = triple and pattern == [True, False, True] and gaps and max(gaps) <= 0.02 and elapsed < 120
    folds = ", ".join(f"{omega[i]:.4f}" for i in turns)
    detail = (
        f"folds at {folds}, three solutions between: {triple}; pattern "
        f"{'/'.join('S' if s else 'U' for s in pattern)}; worst |lambda-1| at transitions "
        f"{_fmt(max(gaps) if gaps else np.nan)} (<= 0.02); {len(branch)} points, {elapsed:.1f} s (< 120)"
    )
    assert report(5, "Duffing continuation structure", ok, detail)


# 6, 7 ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def beam():
    """PFIM on the beam at 2^12 from the linear guess, plus a shooting reference."""
    sys = make_system("fe-beam")
    n_p = 2**12
    iterates = []
    t0 = time.perf_counter()
    guess = initial_guess("fe-beam", n_p)
    res = pfim_solve(sys, guess, "forced", PfimConfig(n_p=n_p),
                     callback=lambda rec, traj: iterates.append(traj.samples.copy()))
    elapsed = time.perf_counter() - t0
    sol = shooting_solve(sys, res.trajectory.x0, TWO_PI, ShootingConfig(n_s=2**16), omega=1.0)
    ref = shooting_trajectory(sys, sol, n_p, omega=1.0)
    errors = [grid_error(s, ref, sys.observed) for s in iterates]
    return sys, res, errors, elapsed, sol


def test_criterion_06_beam_convergence(beam):
    sys, res, errors, elapsed, _ = beam
    e_a = [h.e_a for h in res.history]
    best = int(np.argmin([h.residual_norm for h in res.history]))
    monotone = all(b < a for a, b in zip(e_a[: best + 1], e_a[1 : best + 1]))
    final = grid_error(res.trajectory, _beam_ref(beam), sys.observed)
    ok = res.converged and res.iterations <= 6 and monotone and final <= 1e-8 and elapsed < 120
    detail = (
        f"{res.message}, {res.iterations} iterations (converged in <= 6 required), e_a monotone to the "
        f"returned iterate: {monotone}, error {_fmt(final)} (<= 1e-8), {elapsed:.1f} s (< 120)"
    )
    assert report(6, "FE beam convergence", ok, detail)


def _beam_ref(beam, n_p=2**12):
    sys, _, _, _, sol = beam
    return shooting_trajectory(sys, sol, n_p, omega=1.0)


def _timed_pfim(sys, n_p, ref):
    t0 = time.perf_counter()
    res = pfim_solve(sys, initial_guess("fe-beam", n_p), "forced", PfimConfig(n_p=n_p))
    return time.perf_counter() - t0, grid_error(res.trajectory, ref, sys.observed)


def test_criterion_07_beam_efficiency(beam):
    sys, _, errors, _, _ = beam
    ref = _beam_ref(beam)
    linear = linear_part("fe-beam", {})
    hbm = {}
    for H in (20, 30):
        t0 = time.perf_counter()
        sol = hbm_solve(sys, H, 1.0, hbm_linear_guess(linear, H, 1.0), HbmConfig(tol=1e-9))
        hbm[H] = (time.perf_counter() - t0, grid_error(sol.trajectory(2**12), ref, sys.observed))
    H_best = min(hbm, key=lambda H: hbm[H][1])
    t_hbm, e_hbm = hbm[H_best]
    # cheapest PFIM grid whose error is within one decade of the best HBM error
    for n_p in (2**8, 2**9, 2**10, 2**11, 2**12):
        t_pfim, e_pfim = _timed_pfim(sys, n_p, _beam_ref(beam, n_p))
        if e_pfim <= 10 * e_hbm:
            break
    ratio = t_hbm / t_pfim
    pfim_plateau = min(errors)
    hbm_plateau = min(e for _, e in hbm.values())
    ok = ratio >= 10 and pfim_plateau <= 1e-9 and hbm_plateau >= 1e-8
    detail = (
        f"HBM H={H_best} {t_hbm:.1f} s at error {_fmt(e_hbm)} vs PFIM n_p={n_p} {t_pfim:.2f} s at "
        f"{_fmt(e_pfim)}: ratio {ratio:.0f} (>= 10); PFIM plateau {_fmt(pfim_plateau)} (<= 1e-9); "
        f"HBM plateau {_fmt(hbm_plateau)} (>= 1e-8)"
    )
    assert report(7, "FE beam efficiency ratio", ok, detail)


# 8 -------------------------------------------------------------------------


def test_criterion_08_gibbs():
    sys = make_system("heaviside-piecewise")
    over, guess = {}, None
    for H in (10, 20, 30):
        guess = hbm_solve(sys, H, 3.0, guess)
        over[H] = hbm_force_overshoot(guess, heaviside_force)[0]
    n_p = 2**12
    study = convergence_study(sys, initial_guess("heaviside-piecewise", n_p), cfg=PfimConfig(n_p=n_p, max_iter=20))
    grid = grid_force_overshoot(study.trajectory, study.reference, heaviside_force)
    ok = min(over.values()) >= 0.04 and grid < 0.01
    detail = (
        "HBM overshoot " + ", ".join(f"H={H} {100 * o:.2f}%" for H, o in over.items())
        + f" (>= 4%); PFIM grid overshoot {100 * grid:.3f}% (< 1%)"
    )
    assert report(8, "Gibbs persistence", ok, detail)


# 9 -------------------------------------------------------------------------


def test_criterion_09_oracle_triangle(duffing, duffing_shooting, duffing_ref):
    n_p = 2**12
    pf = pfim_solve(duffing, initial_guess("duffing", n_p), "forced", PfimConfig(n_p=n_p))
    ss = steady_state_reference(duffing, 1.0, n_p, settle_periods=200, n_s=2**12)
    o = duffing.observed
    d = {
        "pfim-shooting": grid_error(pf.trajectory, duffing_ref, o),
        "pfim-steady": grid_error(pf.trajectory, ss, o),
        "shooting-steady": grid_error(duffing_ref, ss, o),
    }
    mult = np.sort_complex(floquet(operators_at(duffing, pf.trajectory)))
    mono = np.sort_complex(np.linalg.eigvals(duffing_shooting.monodromy))
    d_mult = float(np.abs(mult - mono).max())
    ok = max(d.values()) <= 1e-5 and d_mult <= 1e-4 and bool(np.abs(mult).max() < 1)
    detail = ", ".join(f"{k} {_fmt(v)}" for k, v in d.items()) + f" (<= 1e-5); multipliers {_fmt(d_mult)} (<= 1e-4)"
    assert report(9, "oracle triangle", ok, detail)


# 10 ------------------------------------------------------------------------


def _random_matrix(rng):
    n = int(rng.integers(1, 7))
    A = rng.standard_normal((n, n))
    return A * rng.uniform(0.01, 5.0) / np.abs(A).sum(axis=0).max()


def test_criterion_10_kernel_suite():
    rng = np.random.default_rng(20261019)
    fails = dict.fromkeys(("exp inverse", "semigroup", "phi1", "spectral", "solve"), 0)
    t0 = time.perf_counter()
    for _ in range(100):
        A = _random_matrix(rng)
        n = len(A)
        if np.abs(mat_exp(A) @ mat_exp(-A) - np.eye(n)).max() > 1e-10:
            fails["exp inverse"] += 1
        s, t = rng.uniform(0, 1, 2)
        lhs = mat_exp(A * (s + t))
        if np.abs(lhs - mat_exp(A * s) @ mat_exp(A * t)).max() > 1e-10 * max(1.0, np.abs(lhs).max()):
            fails["semigroup"] += 1
        dt = rng.uniform(1e-3, 1.0)
        if np.abs(phi1(A, dt) @ A + np.eye(n) - mat_exp(A * dt)).max() > 1e-10:
            fails["phi1"] += 1
        lam = np.linalg.eigvals(A)
        mu = eigenvalues(mat_exp(A))
        dist = np.abs(mu[:, None] - np.exp(lam)[None, :])
        if max(dist.min(axis=1).max(), dist.min(axis=0).max()) > 1e-7 * max(1.0, np.abs(np.exp(lam)).max()):
            fails["spectral"] += 1
        m = int(rng.integers(1, 13))
        B = rng.standard_normal((m, m)) + m * np.eye(m) * rng.random()
        b = rng.standard_normal(m)
        x = solve_dense(B, b)
        bound = 1e-10 * (np.abs(B).sum(axis=1).max() * np.abs(x).max() + np.abs(b).max())
        if np.abs(B @ x - b).max() > bound:
            fails["solve"] += 1
    elapsed = time.perf_counter() - t0
    ok = not any(fails.values()) and elapsed < 10
    detail = "failures " + ", ".join(f"{k} {v}/100" for k, v in fails.items()) + f"; {elapsed:.2f} s (< 10)"
    assert report(10, "kernel suite", ok, detail)


# 11 ------------------------------------------------------------------------


def test_criterion_11_determinism(tmp_path):
    runs = {
        "solve": (["solve", "--system", "duffing", "--np", "512", "--omega", "1.5"], ("solution.csv", "history.csv")),
        "continue": (["continue", "--system", "duffing", "--np", "256", "--omega-range", "3.0:2.6"], ("branch.csv",)),
    }
    same = {}
    for cmd, (argv, files) in runs.items():
        outs = []
        for k in range(2):
            out = tmp_path / f"{cmd}{k}"
            assert main([*argv, "--out", str(out)]) == 0
            outs.append(out)
        same[cmd] = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    ok = all(same.values())
    detail = ", ".join(f"{k}: {'identical' if v else 'DIFFER'}" for k, v in same.items())
    assert report(11, "determinism", ok, detail)

"""Ten-node cantilever with a cubic and a clearance spring.

Part 1 solves at omega = 1 with the stated modulus E = 3e9 and with
E = 8.53e10, at which the first two natural frequencies are 10.49 and
65.97 rad/s. Part 2 compares PFIM with harmonic balance in wall time and
error. Part 3 (``--sweep N_P``) traces the response over omega in [2.2, 4.5];
at N_P = 16384 this takes about 45 minutes.

Usage: python fe_beam.py [--sweep N_P]
"""

import argparse
import time

import numpy as np

from pfim import ContinuationConfig, PfimConfig, continue_branch, initial_guess, make_system, pfim_solve
from pfim.benchmarks import linear_part
from pfim.errors import BranchStalledError
from pfim.reference import (
    HbmConfig,
    ShootingConfig,
    hbm_linear_guess,
    hbm_solve,
    shooting_solve,
    shooting_trajectory,
    steady_state_reference,
)
from pfim.studies import grid_error
from pfim.system import TWO_PI

parser = argparse.ArgumentParser()
parser.add_argument("--sweep", type=int, default=0, metavar="N_P")
args = parser.parse_args()

N_P = 2**12
for overrides in ({}, {"E": 8.53e10}):
    sys = make_system("fe-beam", overrides)
    t0 = time.perf_counter()
    res = pfim_solve(sys, initial_guess("fe-beam", N_P, overrides), "forced", PfimConfig(n_p=N_P))
    elapsed = time.perf_counter() - t0
    line = f"E = {sys.params['E']:.3g}: {res.message}, {res.iterations} iterations, {elapsed:.1f} s"
    # the stiffer variant needs a smaller RK4 step than 2^16 per period
    if not overrides:
        ref_sol = shooting_solve(sys, res.trajectory.x0, TWO_PI, ShootingConfig(n_s=2**16), omega=1.0)
        ref = shooting_trajectory(sys, ref_sol, N_P, omega=1.0)
        line += f", error vs shooting {grid_error(res.trajectory, ref, sys.observed):.2e}"
    print(line)
    for h in res.history:
        print(f"    {h.iteration:2d}  e_a {h.e_a:.2e}  mean |R| {h.residual_norm:.2e}  e_r {h.e_r:.2e}")

sys = make_system("fe-beam")
print("\nmethod      time [s]   error")
for n_p in (2**9, 2**10, 2**11, 2**12):
    t0 = time.perf_counter()
    res = pfim_solve(sys, initial_guess("fe-beam", n_p), "forced", PfimConfig(n_p=n_p))
    t = time.perf_counter() - t0
    err = grid_error(res.trajectory, shooting_trajectory(sys, ref_sol, n_p, omega=1.0), sys.observed)
    print(f"PFIM {n_p:5d}  {t:8.2f}   {err:.2e}")
for H in (10, 20, 30):
    t0 = time.perf_counter()
    sol = hbm_solve(sys, H, 1.0, hbm_linear_guess(linear_part("fe-beam", {}), H, 1.0), HbmConfig(tol=1e-9))
    t = time.perf_counter() - t0
    print(f"HBM  H={H:3d}  {t:8.2f}   {grid_error(sol.trajectory(N_P), ref, sys.observed):.2e}")

if args.sweep:
    n_p = args.sweep
    cfg = ContinuationConfig(2.2, 4.5, pfim=PfimConfig(n_p=n_p, max_iter=12, tol_r=1e-6), max_points=1000)
    seed = steady_state_reference(sys, 2.2, n_p, settle_periods=60, n_s=max(4096, n_p))
    t0 = time.perf_counter()
    try:
        branch = continue_branch(sys, cfg, seed)
    except BranchStalledError as exc:
        print(exc)
        branch = exc.branch
    print(f"\n{len(branch)} points in {time.perf_counter() - t0:.0f} s")
    omega = np.array([p.omega for p in branch])
    for i in range(1, len(branch) - 1):
        if (omega[i] - omega[i - 1]) * (omega[i + 1] - omega[i]) < 0:
            print(f"fold at omega = {omega[i]:.4f}, amplitude {branch[i].amplitude:.4f}")
    for a, b in zip(branch, branch[1:]):
        if a.stable != b.stable:
            print(f"stability change between omega = {a.omega:.4f} and {b.omega:.4f}")

"""Amplitude-frequency response of the Duffing oscillator over omega in [0.4, 4].

Traces the branch by pseudo-arclength continuation, marks the stability of
each point and lists the fold points (where omega reverses and a real Floquet
multiplier passes +1).
"""

import time

import matplotlib.pyplot as plt
import numpy as np

from _plot import save
from pfim import ContinuationConfig, continue_branch, initial_guess, make_system

sys = make_system("duffing")
cfg = ContinuationConfig(0.4, 4.0)
t0 = time.perf_counter()
branch = continue_branch(sys, cfg, initial_guess("duffing", cfg.pfim.n_p, omega=0.4))
print(f"{len(branch)} points in {time.perf_counter() - t0:.1f} s")

omega = np.array([p.omega for p in branch])
amp = np.array([p.amplitude for p in branch])
stable = np.array([p.stable for p in branch])
for i in range(1, len(branch) - 1):
    if (omega[i] - omega[i - 1]) * (omega[i + 1] - omega[i]) < 0:
        near_one = np.abs(branch[i].multipliers - 1).min()
        print(f"fold at omega = {omega[i]:.4f}, amplitude {amp[i]:.4f}, min |lambda - 1| = {near_one:.3g}")

fig, (ax, bx) = plt.subplots(1, 2, figsize=(10, 4))
ax.plot(omega, np.where(stable, amp, np.nan), "b-", label="stable")
ax.plot(omega, np.where(~stable, amp, np.nan), "r--", label="unstable")
ax.set(xlabel="omega", ylabel="max |x|", title="Duffing response")
ax.legend()
bx.plot(omega, [p.max_multiplier_abs for p in branch], "k.", ms=2)
bx.axhline(1.0, color="grey", lw=0.5)
bx.set(xlabel="omega", ylabel="max |Floquet multiplier|")
save(fig, "duffing_continuation.png")

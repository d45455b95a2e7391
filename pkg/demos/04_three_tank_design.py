"""
Designing a robust input for the three-tank system
==================================================

A scaled-down run: 600 s instead of 3000 s and 400 samples per model, so
it finishes in about a minute. The full-size runs use the command line
(see ``scenario_c2.yaml``).
"""

# %%
import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from drafd.diagnose import evaluate_schedule
from drafd.inputdesign import DesignOptions, run_procedure
from drafd.sysmodel import three_tank_bank

nominal = three_tank_bank("nominal")
true = three_tank_bank("true")
times = np.arange(100.0, 601.0, 100.0)

# %%
# Nominal design (R = 0) and robust design (R = 0.5)
schedules = {}
for R in (0.0, 0.5):
    opts = DesignOptions(radius=R, mc_count=400, seed=1, nm_maxfev=10)
    sched, record = run_procedure(nominal, 600.0, times, opts)
    schedules[R] = sched
    print(f"R={R}: inputs [1e-4 m^3/s]")
    print(np.round(sched.values * 1e4, 3))
    print("   worst-case objective per interval", np.round(record.objectives, 3))

# %%
# With R = 0.5 the mean intervals of all three models already overlap, so
# every candidate reaches the largest worst-case bound (one per pair). The
# tie is broken by the area of the nominal densities.

# %%
# Both schedules applied to the true-parameter bank
fig, ax = plt.subplots(figsize=(5, 3))
for R, sched in schedules.items():
    rep = evaluate_schedule(true, sched, 1000, seed=11)
    ax.plot(rep.times, rep.total_areas, marker=".", label=f"designed with R = {R}")
    print(f"R={R}: final common area per pair {np.round(rep.final_pair_areas, 3)}")
ax.set_xlabel("time [s]")
ax.set_ylabel("total common area")
ax.legend()
fig.tight_layout()
fig.savefig("three_tank_areas.png", dpi=120)

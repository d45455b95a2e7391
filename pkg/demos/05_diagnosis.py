"""
Deciding which fault is acting
==============================

Under a designed input, simulate one realization of a faulty system and
pick the model whose fitted output density explains the measurement best.
"""

# %%
import numpy as np

from drafd.diagnose import decide, decide_sequential, evaluate_schedule, simulate_realization
from drafd.sysmodel import InputSchedule, three_tank_bank

true = three_tank_bank("true")
# a hand-made schedule: fill through pump 1, then switch to pump 2
sched = InputSchedule([0.0, 300.0], [[1e-4, 0.0], [0.0, 1e-4]], horizon=600.0)
report = evaluate_schedule(true, sched, 1000, seed=3)
print("final common area per pair", np.round(report.final_pair_areas, 3), report.pairs)

# %%
# Pointwise decisions at the final time over repeated leak (Fault B) realizations
t_end = report.times[-1]
hits = [decide(report, simulate_realization(true, sched, 2, seed=k)[-1], t_end) for k in range(100)]
print("decided per model:", np.bincount(hits, minlength=3))

# %%
# Sequential fusion multiplies the likelihoods of all measurements so far
y = simulate_realization(true, sched, 2, seed=0)
print("sequential decision:", decide_sequential(report, y, report.times))

"""
Total variation between fitted output densities
===============================================

Two output densities that overlap a lot are hard to tell apart from one
measurement. The overlap is measured as the common area ``1 - TV``.
"""

# %%
# Closed form for two normals with the same width
import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from drafd.distfit import MomentPdf, OutputEnsemble, common_area, fit_normal_ml, tv_density
from drafd.worstcase import pair_bound

p = MomentPdf("normal", 0.0, 1.0)
q = MomentPdf("normal", 2.0, 1.0)
print("TV(N(0,1), N(2,1)) =", tv_density(p, q))  # 0.6827: the means are two std apart

# %%
# Unequal widths use the crossing points of the two densities
print("TV(N(0,1), N(0.5,2)) =", tv_density(MomentPdf("normal", 0, 1), MomentPdf("normal", 0.5, 2)))

# %%
# Other families are matched by their first two moments
g1, g2 = MomentPdf("gamma", 2.0, 0.5), MomentPdf("gamma", 2.6, 0.6)
print("TV between two gammas =", tv_density(g1, g2))

# %%
# Densities are fitted to Monte Carlo output samples by maximum likelihood
rng = np.random.default_rng(0)
fits = [fit_normal_ml(OutputEnsemble(j, 100.0, rng.normal(m, 0.05, 2000))) for j, m in enumerate((0.2, 0.25, 0.4))]
print("total common area of three fitted densities =", common_area(fits))

# %%
# The moment bound always sits above the exact common area
gaps = np.linspace(0, 3, 61)
exact = [1 - tv_density(MomentPdf("normal", 1.0, 0.5), MomentPdf("normal", 1.0 + d, 0.5)) for d in gaps]
bound = [pair_bound(1.0, 0.5, 1.0 + d, 0.5) for d in gaps]

fig, ax = plt.subplots(figsize=(5, 3))
ax.plot(gaps, exact, label="common area")
ax.plot(gaps, bound, "--", label="moment bound")
ax.set_xlabel("mean gap")
ax.legend()
fig.tight_layout()
fig.savefig("tv_bound.png", dpi=120)

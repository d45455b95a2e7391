"""
The inner problem: worst-case overlap inside the boxes
======================================================

For fixed boxes, find the (mean, std) pairs that make the models overlap
most. The answer comes with a KKT certificate.
"""

# %%
import numpy as np

from drafd.ambiguity import build_roi
from drafd.distfit import MomentPdf
from drafd.worstcase import solve_inner, total_bound, worst_case_common_area

noms = [MomentPdf("normal", 0.15, 0.02), MomentPdf("normal", 0.30, 0.03), MomentPdf("normal", 0.55, 0.02)]

for R in (0.0, 0.3, 0.9):
    boxes = [build_roi(p, R, (0.0, 0.75), j) for j, p in enumerate(noms)]
    area, sol = worst_case_common_area(boxes)
    print(f"R={R}: bound {sol.objective:.4f}  exact area at the optimum {area:.4f}  "
          f"KKT residual {sol.kkt_residual:.1e}  certified {sol.certified}")
    print("   means", np.round(sol.mu, 4), " stds", np.round(sol.sigma, 4))

# %%
# Larger radii can only raise the worst case. When two mean intervals
# overlap, the worst case puts both means at one common point and each std
# at its upper end.

# %%
# The bound is not concave everywhere. Along this segment the midpoint lies
# below the chord, so the solver keeps several starting points.
a = np.array([[0.0, 0.5], [0.0, 0.5]])
b = np.array([[3.0, 0.5], [0.0, 0.5]])
print("midpoint", total_bound(0.5 * (a + b)), "chord", 0.5 * (total_bound(a) + total_bound(b)))
sol = solve_inner([build_roi(p, 0.3, (0.0, 0.75), j) for j, p in enumerate(noms)])
print("restarts used:", sol.restarts)

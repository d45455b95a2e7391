"""
Regions of interest around a nominal density
============================================

The true output density is only known to lie within TV radius R of the
fitted one. The designer works with a box of admissible (mean, std) pairs.
"""

# %%
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Rectangle

from drafd.ambiguity import build_roi
from drafd.distfit import MomentPdf

nominal = MomentPdf("normal", 0.4, 0.05)
output_range = (0.0, 0.75)

# %%
# Boxes grow with R and are nested
fig, ax = plt.subplots(figsize=(5, 3.5))
for R in (0.05, 0.2, 0.4, 0.7):
    box = build_roi(nominal, R, output_range)
    print(f"R={R:4}: mean [{box.alpha:.4f}, {box.beta:.4f}]  std [{box.gamma:.4f}, {box.delta:.4f}]"
          f"  worst corner TV {box.corner_tv:.3f}")
    ax.add_patch(Rectangle((box.alpha, box.gamma), box.beta - box.alpha, box.delta - box.gamma, fill=False,
                           label=f"R = {R}"))
ax.plot(nominal.mu, nominal.sigma, "k.")
ax.set_xlim(*output_range)
ax.set_ylim(0, 0.26)
ax.set_xlabel("mean")
ax.set_ylabel("std")
ax.legend()
fig.tight_layout()
fig.savefig("roi_boxes.png", dpi=120)

# %%
# Each edge is tight along its own coordinate, but the corners lie outside
# the TV ball (the worst corner TV above exceeds R). A warning is logged.
#
# With R = 1 the box is the whole output range and the std reaches its cap,
# a third of the range.
box = build_roi(nominal, 1.0, output_range)
print("R=1:", box.mu_interval, box.sigma_interval)

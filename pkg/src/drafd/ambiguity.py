"""Mean/std regions of interest induced by a TV ball around a nominal density."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .distfit import MomentPdf, tv_density

__all__ = ["RoiBox", "build_roi", "contains", "SIGMA_FLOOR"]

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-9
_BISECT_ITERS = 200


@dataclass(frozen=True)
class RoiBox:
    model_index: int
    mu_interval: tuple
    sigma_interval: tuple
    radius: float
    nominal: MomentPdf | None = None
    corner_tv: float = float("nan")

    @property
    def alpha(self):
        return self.mu_interval[0]

    @property
    def beta(self):
        return self.mu_interval[1]

    @property
    def gamma(self):
        return self.sigma_interval[0]

    @property
    def delta(self):
        return self.sigma_interval[1]

    def corners(self):
        return [(m, s) for m in self.mu_interval for s in self.sigma_interval]


def contains(box, mu, sigma):
    return box.alpha <= mu <= box.beta and box.gamma <= sigma <= box.delta


def _bisect_feasible(tv_at, inside, outside, radius):
    """Largest step from ``inside`` toward ``outside`` with tv_at(.) <= radius."""
    if tv_at(outside) <= radius:
        return outside
    a, b = inside, outside
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (a + b)
        if mid == a or mid == b:
            break
        if tv_at(mid) <= radius:
            a = mid
        else:
            b = mid
    return a


def _pull_in(tv_at, inside, x, radius):
    """Move a closed-form endpoint inward until tv_at(x) <= radius.

    The closed form can overshoot by an ulp or two. Larger misses (the shift
    rounds to infinity for radius within an ulp of 1) fall back to bisection.
    """
    for _ in range(4):
        if x == inside or tv_at(x) <= radius:
            return x
        x = np.nextafter(x, inside)
    return _bisect_feasible(tv_at, inside, x, radius)


def _family_mean_limits(nominal, lo, hi):
    # keep the shifted density inside its family's domain
    if nominal.family == "gamma":
        lo = max(lo, nominal.sigma * 1e-6)
    elif nominal.family == "beta":
        s2 = nominal.sigma**2
        disc = math.sqrt(max(1 - 4 * s2, 0.0))
        lo = max(lo, 0.5 * (1 - disc) * (1 + 1e-9))
        hi = min(hi, 0.5 * (1 + disc) * (1 - 1e-9))
    return lo, hi


def _family_sigma_cap(nominal, mu, cap):
    if nominal.family == "beta":
        return min(cap, math.sqrt(mu * (1 - mu)) * (1 - 1e-9))
    return cap


def build_roi(nominal, radius, state_box, model_index=0):
    """Box of (mean, std) pairs whose per-coordinate TV to ``nominal`` is at most ``radius``.

    The mean interval moves the mean at nominal std; the std interval moves
    the std at nominal mean. Both are clipped to ``state_box`` (the output
    range); the std is additionally capped at a third of its width, the
    largest std of a unimodal density on that range.
    """
    if not 0.0 <= radius <= 1.0:
        raise ValueError(f"TV radius must lie in [0, 1], got {radius}")
    a, b = map(float, np.ravel(state_box)[:2])
    mu, sigma = nominal.mu, nominal.sigma
    cap = max((b - a) / 3.0, sigma)

    if radius == 0.0:
        return RoiBox(model_index, (mu, mu), (sigma, sigma), 0.0, nominal, 0.0)

    def tv_mu(m):
        return tv_density(MomentPdf(nominal.family, m, sigma), nominal)

    def tv_sigma(s):
        return tv_density(MomentPdf(nominal.family, mu, s), nominal)

    lo, hi = _family_mean_limits(nominal, min(a, mu), max(b, mu))
    if nominal.family == "normal":
        if radius >= 1.0:
            shift = math.inf
        else:
            shift = 2.0 * sigma * special.ndtri(0.5 * (1.0 + radius))
        alpha = _pull_in(tv_mu, mu, max(mu - shift, lo), radius)
        beta = _pull_in(tv_mu, mu, min(mu + shift, hi), radius)
    else:
        alpha = _bisect_feasible(tv_mu, mu, lo, radius)
        beta = _bisect_feasible(tv_mu, mu, hi, radius)

    s_floor = min(SIGMA_FLOOR, sigma)
    gamma = _bisect_feasible(tv_sigma, sigma, s_floor, radius)
    delta = _bisect_feasible(tv_sigma, sigma, _family_sigma_cap(nominal, mu, cap), radius)

    corner = 0.0
    for m in (alpha, beta):
        for s in (gamma, delta):
            try:
                corner = max(corner, tv_density(MomentPdf(nominal.family, m, s), nominal))
            except ValueError:
                corner = 1.0
    if corner > radius + 1e-6:
        log.warning(
            "model %d: ROI corner TV %.6f exceeds radius %.6f (box is wider than the TV ball)",
            model_index, corner, radius,
        )
    return RoiBox(model_index, (float(alpha), float(beta)), (float(gamma), float(delta)),
                  float(radius), nominal, float(corner))

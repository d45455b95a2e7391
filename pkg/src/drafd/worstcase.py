"""Moment-based upper bound on pairwise common area and its box-constrained maximization.

For two normals the common area 1 - TV is bounded by::

    1 - (mu_i - mu_j)^2 / (2 (mu_i^2 + mu_j^2 + s_i^2 + s_j^2))

and summing over pairs bounds the total common area of a bank. The inner
problem maximizes that sum over per-model (mean, std) boxes; the result is
certified with the box KKT conditions (stationarity of the Lagrangian plus
sign/complementarity of the bound multipliers).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import SIGMA_FLOOR
from .distfit import MomentPdf, common_area

__all__ = [
    "WorstCaseSolution",
    "UndefinedBound",
    "pair_bound",
    "total_bound",
    "bound_gradient",
    "kkt_multipliers",
    "solve_inner",
    "worst_case_common_area",
]

KKT_TOL = 1e-6


class UndefinedBound(ValueError):
    pass


def pair_bound(mu_i, sigma_i, mu_j, sigma_j):
    denom = mu_i**2 + mu_j**2 + sigma_i**2 + sigma_j**2
    if denom == 0:
        raise UndefinedBound("the bound is undefined when all means and stds are zero")
    return 1.0 - (mu_i - mu_j) ** 2 / (2.0 * denom)


def _as_arrays(moments):
    m = np.asarray(moments, dtype=float)
    if m.ndim != 2 or m.shape[1] != 2:
        raise ValueError("moments must be a sequence of (mean, std) pairs")
    return m[:, 0], m[:, 1]


def total_bound(moments):
    mu, sigma = _as_arrays(moments)
    n = len(mu)
    if n < 2:
        raise ValueError("the bound needs at least two models")
    return sum(pair_bound(mu[i], sigma[i], mu[j], sigma[j]) for i in range(n) for j in range(i + 1, n))


def _bound_vec(mu, sigma):
    d = mu[:, None] - mu[None, :]
    den = mu[:, None] ** 2 + mu[None, :] ** 2 + sigma[:, None] ** 2 + sigma[None, :] ** 2
    iu = np.triu_indices(len(mu), 1)
    return float(np.sum(1.0 - d[iu] ** 2 / (2.0 * den[iu])))


def bound_gradient(moments):
    """Analytic gradient of :func:`total_bound`; returns arrays (d/dmu, d/dsigma)."""
    mu, sigma = _as_arrays(moments)
    mi, mj = mu[None, :], mu[:, None]  # row j, column i
    si2, sj2 = sigma[None, :] ** 2, sigma[:, None] ** 2
    den = mi**2 + mj**2 + si2 + sj2
    np.fill_diagonal(den, 1.0)
    g_mu = (mi - mj) * (mi**2 + mi * mj + si2 + sj2) / den**2
    g_sigma = sigma[:, None] * (mj - mi) ** 2 / den**2
    np.fill_diagonal(g_mu, 0.0)
    np.fill_diagonal(g_sigma, 0.0)
    return g_mu.sum(axis=1), g_sigma.sum(axis=1)


@dataclass
class WorstCaseSolution:
    mu: np.ndarray
    sigma: np.ndarray
    lam_mu: np.ndarray
    s_mu: np.ndarray
    lam_sigma: np.ndarray
    s_sigma: np.ndarray
    objective: float
    kkt_residual: float
    certified: bool
    iterations: int = 0
    restarts: int = 0
    notes: list = field(default_factory=list)

    @property
    def moments(self):
        return np.column_stack([self.mu, self.sigma])


def _bounds(boxes):
    lo = np.array([[b.alpha, max(b.gamma, SIGMA_FLOOR)] for b in boxes])
    hi = np.array([[b.beta, max(b.delta, SIGMA_FLOOR)] for b in boxes])
    return lo, hi


def kkt_multipliers(moments, lo, hi, atol=1e-12):
    """Recover box multipliers and the KKT residual at ``moments``.

    Upper-bound multipliers (``lam``) take the positive part of the gradient
    on coordinates at their upper bound, lower-bound multipliers (``s``) the
    negative part on coordinates at their lower bound. The residual is the
    largest stationarity violation left over; complementarity holds by
    construction.
    """
    x = np.asarray(moments, dtype=float)
    g = np.column_stack(bound_gradient(x))
    scale = np.maximum(hi - lo, 1.0)
    at_hi = x >= hi - atol * scale
    at_lo = x <= lo + atol * scale
    lam = np.where(at_hi, np.maximum(g, 0.0), 0.0)
    s = np.where(at_lo, np.maximum(-g, 0.0), 0.0)
    residual = np.abs(g + s - lam)
    return lam, s, float(residual.max()) if residual.size else 0.0


def _projected_ascent(x, lo, hi, max_iter, tol):
    """Projected gradient ascent with Barzilai-Borwein steps and Armijo backtracking."""
    f = _bound_vec(x[:, 0], x[:, 1])
    g = np.column_stack(bound_gradient(x))
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        while True:
            x_new = np.clip(x + step * g, lo, hi)
            f_new = _bound_vec(x_new[:, 0], x_new[:, 1])
            if f_new >= f + 1e-4 * np.sum(g * (x_new - x)) or step < 1e-20:
                break
            step *= 0.5
        g_new = np.column_stack(bound_gradient(x_new))
        dx, dg = x_new - x, g_new - g
        x, f, g = x_new, f_new, g_new
        pg = np.clip(x + g, lo, hi) - x
        if np.abs(pg).max() <= tol:
            break
        curv = -np.sum(dx * dg)
        step = np.sum(dx * dx) / curv if curv > 1e-300 else min(step * 4.0, 1e12)
        step = min(max(step, 1e-12), 1e12)
    return x, f, it


def _canonical(x, lo, hi, nominal_mu):
    """Pick a deterministic representative among equal-objective maximizers.

    The bound never decreases in any std, so stds move to their upper caps.
    Means that can all coincide (shared overlap of the mean intervals) are
    moved to the common point nearest the nominal means.
    """
    x = x.copy()
    x[:, 1] = hi[:, 1]
    common_lo, common_hi = lo[:, 0].max(), hi[:, 0].min()
    if common_lo <= common_hi:
        x[:, 0] = min(max(float(np.mean(nominal_mu)), common_lo), common_hi)
    return x


def solve_inner(boxes, max_iter=5000, tol=1e-12, n_random=8, seed=0):
    """Maximize the total bound over the product of ROI boxes.

    Starts from the box midpoints and from the nominal moments; if neither
    certifies, restarts from ``n_random`` seeded interior points. The best
    certified iterate wins (the best iterate overall when none certifies).
    """
    if len(boxes) < 2:
        raise ValueError("the inner problem needs at least two models")
    lo, hi = _bounds(boxes)
    nominal = np.array([
        [b.nominal.mu, b.nominal.sigma] if b.nominal is not None else [0.5 * (b.alpha + b.beta), b.delta]
        for b in boxes
    ])
    nominal = np.clip(nominal, lo, hi)
    rng = np.random.default_rng(seed)
    starts = [0.5 * (lo + hi), nominal] + [lo + rng.random(lo.shape) * (hi - lo) for _ in range(n_random)]

    best = None
    for k, x0 in enumerate(starts):
        x, f, it = _projected_ascent(x0, lo, hi, max_iter, tol)
        cand = _canonical(x, lo, hi, nominal[:, 0])
        f_cand = _bound_vec(cand[:, 0], cand[:, 1])
        if f_cand >= f - 1e-15:
            x, f = cand, f_cand
        lam, s, res = kkt_multipliers(x, lo, hi)
        ok = res <= KKT_TOL
        key = (ok, f)
        if best is None or key > best[0]:
            best = (key, x, lam, s, res, it, k)
        # random restarts only when neither deterministic start certified
        if k == 1 and best[0][0]:
            break
    (ok, f), x, lam, s, res, it, k = best
    sol = WorstCaseSolution(
        mu=x[:, 0].copy(), sigma=x[:, 1].copy(),
        lam_mu=lam[:, 0], s_mu=s[:, 0], lam_sigma=lam[:, 1], s_sigma=s[:, 1],
        objective=float(f), kkt_residual=res, certified=bool(ok), iterations=it, restarts=k,
    )
    if not ok:
        sol.notes.append(f"KKT residual {res:.3g} above {KKT_TOL:g}; best iterate returned uncertified")
    return sol


def _family_pdf(family, mu, sigma):
    if family == "gamma":
        mu = max(mu, 1e-9)
    elif family == "beta":
        mu = min(max(mu, 1e-9), 1 - 1e-9)
        sigma = min(sigma, math.sqrt(mu * (1 - mu)) * (1 - 1e-9))
    return MomentPdf(family, float(mu), float(sigma))


def worst_case_common_area(boxes, family="normal", **solver_options):
    """Exact common area of the densities at the maximizer of the bound."""
    sol = solve_inner(boxes, **solver_options)
    families = [family] * len(boxes) if isinstance(family, str) else list(family)
    pdfs = [_family_pdf(f, m, s) for f, m, s in zip(families, sol.mu, sol.sigma)]
    return common_area(pdfs), sol

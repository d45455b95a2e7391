"""Fitted output densities and total-variation distances between them.

Every density is carried as a :class:`MomentPdf` (family, mean, std); the
family-specific shape parameters are recovered from the two moments on
demand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special, stats

__all__ = [
    "MomentPdf",
    "OutputEnsemble",
    "Histogram",
    "DegenerateEnsemble",
    "TVComputationError",
    "fit_normal_ml",
    "fit_moments",
    "gamma_from_moments",
    "beta_from_moments",
    "tv_density",
    "tv_normal",
    "tv_histogram",
    "common_area",
    "pairwise_common_areas",
]

FAMILIES = ("normal", "gamma", "beta")


class DegenerateEnsemble(ValueError):
    pass


class TVComputationError(ArithmeticError):
    pass


def gamma_from_moments(mu, sigma):
    """Shape and rate of the gamma law with mean ``mu`` and std ``sigma``."""
    if not mu > 0:
        raise ValueError(f"gamma needs a positive mean, got {mu}")
    if not sigma > 0:
        raise ValueError(f"gamma needs a positive std, got {sigma}")
    return (mu / sigma) ** 2, mu / sigma**2


def beta_from_moments(mu, sigma):
    """Shape parameters of the beta law with mean ``mu`` and std ``sigma``."""
    var = sigma**2
    if not 0 < mu < 1:
        raise ValueError(f"beta needs a mean in (0, 1), got {mu}")
    if not 0 < var < mu * (1 - mu):
        raise ValueError(f"beta moments infeasible: sigma^2={var} must lie in (0, mu(1-mu)={mu * (1 - mu)})")
    a = mu * (mu - mu**2 - var) / var
    return a, a * (1 - mu) / mu


@dataclass(frozen=True)
class MomentPdf:
    family: str
    mu: float
    sigma: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not (np.isfinite(self.mu) and self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError(f"invalid moments mu={self.mu}, sigma={self.sigma}")
        if self.family == "gamma":
            gamma_from_moments(self.mu, self.sigma)
        elif self.family == "beta":
            beta_from_moments(self.mu, self.sigma)

    def frozen(self):
        if self.family == "normal":
            return stats.norm(self.mu, self.sigma)
        if self.family == "gamma":
            a, b = gamma_from_moments(self.mu, self.sigma)
            return stats.gamma(a, scale=1.0 / b)
        a, b = beta_from_moments(self.mu, self.sigma)
        return stats.beta(a, b)

    def pdf(self, y):
        return self.frozen().pdf(y)


@dataclass
class OutputEnsemble:
    model_index: int
    t_m: float
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).ravel()
        if self.samples.size < 2:
            raise DegenerateEnsemble("an ensemble needs at least two samples")
        if not np.all(np.isfinite(self.samples)):
            raise DegenerateEnsemble(f"non-finite samples in ensemble of model {self.model_index}")


@dataclass
class Histogram:
    bin_edges: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.masses = np.asarray(self.masses, dtype=float)
        if len(self.bin_edges) != len(self.masses) + 1 or np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin edges must be increasing with one more edge than masses")
        if np.any(self.masses < 0) or abs(self.masses.sum() - 1.0) > 1e-12:
            raise ValueError("masses must be nonnegative and sum to one")

    @classmethod
    def from_samples(cls, samples, bins="fd", range=None):
        counts, edges = np.histogram(np.asarray(samples, dtype=float), bins=bins, range=range)
        masses = counts / counts.sum()
        return cls(edges, masses / masses.sum())


def fit_normal_ml(ens):
    """Maximum-likelihood normal fit (biased variance)."""
    y = ens.samples
    mu = y.mean()
    sigma = math.sqrt(np.mean((y - mu) ** 2))
    if not sigma > 0:
        raise DegenerateEnsemble(f"zero output variance for model {ens.model_index} at t={ens.t_m:g}")
    return MomentPdf("normal", float(mu), sigma)


def fit_moments(ens, family="normal"):
    """Fit ``family`` by matching the ML mean and std of the ensemble."""
    pdf = fit_normal_ml(ens)
    if family == "normal":
        return pdf
    return MomentPdf(family, pdf.mu, pdf.sigma)


def tv_normal(mu1, s1, mu2, s2):
    """Exact TV distance between N(mu1, s1^2) and N(mu2, s2^2)."""
    if s1 == s2:
        if mu1 == mu2:
            return 0.0
        return float(special.erf(abs(mu1 - mu2) / (2.0 * s1) / math.sqrt(2.0)))
    if s1 > s2:
        mu1, s1, mu2, s2 = mu2, s2, mu1, s1
    # The narrower density f1 dominates between the two roots of
    # log f1 = log f2. In z = (y - mu1) / s1 this reads a z^2 + b z + c = 0
    # with O(1) coefficients, which stays accurate for s1 << s2.
    rho = s1 / s2
    delta = (mu1 - mu2) / s2
    a = -((s2 - s1) / s2) * (1.0 + rho)
    b = 2.0 * rho * delta
    c = delta * delta - 2.0 * math.log(rho)
    disc = math.sqrt(b * b - 4.0 * a * c)
    q = -0.5 * (b + math.copysign(disc, b))
    z1, z2 = q / a, c / q
    zl, zh = min(z1, z2), max(z1, z2)
    p1 = _std_mass(zl, zh)
    p2 = _std_mass(rho * zl + delta, rho * zh + delta)
    return float(min(max(p1 - p2, 0.0), 1.0))


def _std_mass(zl, zh):
    # P(zl < Z < zh) for a standard normal, evaluated in the thinner tail
    if zl > 0:
        return float(special.ndtr(-zl) - special.ndtr(-zh))
    return float(special.ndtr(zh) - special.ndtr(zl))


_LEVELS = np.unique(np.concatenate([
    np.logspace(-16, -1, 61), np.linspace(0.1, 0.9, 801), 1.0 - np.logspace(-1, -16, 61),
]))


def _tv_crossings(p, q):
    """TV for general families from the crossings of the two densities.

    Crossings are bracketed on a grid of quantiles of both densities (so a
    very narrow density is still resolved) and refined with brentq on the
    log-density ratio. TV is then the sum, over pieces where f_p > f_q, of
    the CDF differences, which avoids integrating sharp peaks.
    """
    fp, fq = p.frozen(), q.frozen()
    grid = np.unique(np.concatenate([fp.ppf(_LEVELS), fq.ppf(_LEVELS), [p.mu, q.mu]]))
    grid = grid[np.isfinite(grid)]
    with np.errstate(divide="ignore", invalid="ignore"):
        lp, lq = fp.logpdf(grid), fq.logpdf(grid)
        d = lp - lq
    d = np.where(np.isneginf(lq) & np.isfinite(lp), np.inf, d)
    d = np.where(np.isneginf(lp) & np.isfinite(lq), -np.inf, d)
    ok = ~np.isnan(d)
    grid, d = grid[ok], d[ok]

    def log_ratio(y):
        return float(fp.logpdf(y) - fq.logpdf(y))

    cuts = [-np.inf]
    for k in np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]:
        a, b = grid[k], grid[k + 1]
        if np.isfinite(d[k]) and np.isfinite(d[k + 1]):
            cuts.append(optimize.brentq(log_ratio, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps))
        else:
            # one density vanishes on this side: the support edge is the crossing
            cuts.append(b if np.isinf(d[k]) else a)
    cuts.append(np.inf)

    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        inside = (grid > a) & (grid < b)
        if not inside.any():
            continue
        if np.median(d[inside]) > 0:
            total += (fp.cdf(b) - fp.cdf(a)) - (fq.cdf(b) - fq.cdf(a))
    if not np.isfinite(total):
        raise TVComputationError(f"TV between {p} and {q} is not finite")
    return float(min(max(total, 0.0), 1.0))


def tv_density(p, q):
    """Total-variation distance between two fitted densities, in [0, 1]."""
    if p == q:
        return 0.0
    if p.family == "normal" and q.family == "normal":
        return tv_normal(p.mu, p.sigma, q.mu, q.sigma)
    return _tv_crossings(p, q)


def tv_histogram(p, q):
    """TV distance between two histograms on the common refinement of their bins.

    Mass inside a bin is taken as uniformly spread when a bin is split.
    """
    edges = np.union1d(p.bin_edges, q.bin_edges)

    def refine(h):
        cdf = np.concatenate([[0.0], np.cumsum(h.masses)])
        return np.diff(np.interp(edges, h.bin_edges, cdf, left=0.0, right=1.0))

    return float(0.5 * np.abs(refine(p) - refine(q)).sum())


def pairwise_common_areas(pdfs):
    """Matrix of 1 - TV between every pair of densities (ones on the diagonal)."""
    n = len(pdfs)
    out = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = 1.0 - tv_density(pdfs[i], pdfs[j])
    return out


def common_area(pdfs):
    """Sum over unordered pairs of the common area 1 - TV."""
    if len(pdfs) < 2:
        raise ValueError("common area needs at least two densities")
    areas = pairwise_common_areas(pdfs)
    return float(areas[np.triu_indices(len(pdfs), 1)].sum())

"""Distributionally robust input design, one measurement interval at a time.

For each interval the designer looks for the constant input that minimizes
the worst-case common area of the bank's output densities at the end of the
interval. The worst case ranges over TV balls of radius R_j around the
nominal densities fitted to a Monte Carlo ensemble. The chosen input is then
applied to the ensemble and its terminal states seed the next interval.

All candidates of an interval see the same parameter draws, initial states
and measurement-noise draws (common random numbers), so the outer objective
is a deterministic function of the input.
"""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .ambiguity import build_roi
from .distfit import OutputEnsemble, common_area, fit_moments
from .sysmodel import (
    InputSchedule,
    IntegrationDiverged,
    noise_stream,
    propagate,
    sample_initial_state,
    sample_parameters,
    sample_stream,
)
from .worstcase import worst_case_common_area

__all__ = [
    "DesignOptions",
    "DesignInfeasible",
    "Ensemble",
    "CandidateEval",
    "IntervalRecord",
    "DesignRecord",
    "InputSchedule",
    "evaluate_candidate",
    "design_interval",
    "run_procedure",
]

log = logging.getLogger(__name__)

_INFEASIBLE = 1e6


class DesignInfeasible(RuntimeError):
    def __init__(self, interval, message="no feasible candidate input"):
        self.interval = tuple(interval)
        super().__init__(f"{message} on interval [{interval[0]:g}, {interval[1]:g}] s")


@dataclass
class DesignOptions:
    radius: object = 0.0  # scalar or one value per model
    family: object = "normal"  # scalar or one family per model
    mc_count: int = 2000
    seed: int = 0
    dt: float = 1.0
    grid_points: int = 6
    nm_maxfev: int = 40
    nm_xatol: float = 1e-3  # in units of the input-box width
    nm_fatol: float = 1e-6
    clamp_tol: float = 1e-9
    # fraction of samples per model allowed to leave the state box (0 = hard constraint)
    violation_fraction: float = 0.0
    tie_tol: float = 1e-12
    workers: int = 1

    def radii(self, n):
        r = np.broadcast_to(np.asarray(self.radius, dtype=float), (n,)).copy()
        if np.any((r < 0) | (r > 1)):
            raise ValueError(f"TV radii must lie in [0, 1], got {r}")
        return r

    def families(self, n):
        if isinstance(self.family, str):
            return [self.family] * n
        fams = list(self.family)
        if len(fams) != n:
            raise ValueError(f"need {n} fit families, got {len(fams)}")
        return fams


@dataclass
class Ensemble:
    """Per-model Monte Carlo samples: frozen parameters and current states."""

    thetas: list
    states: list
    seed: int = 0

    @classmethod
    def draw(cls, bank, n, seed):
        thetas, states = [], []
        for j, model in enumerate(bank.models):
            th = np.empty((n, model.n_theta))
            x0 = np.empty((n, bank.n_x))
            for i in range(n):
                rng = sample_stream(seed, j, i)
                th[i] = sample_parameters(model, rng)
                x0[i] = sample_initial_state(model, rng)
            thetas.append(th)
            states.append(np.clip(x0, bank.state_box[:, 0], bank.state_box[:, 1]))
        return cls(thetas, states, seed)

    @property
    def size(self):
        return self.states[0].shape[0]

    def with_states(self, states):
        return Ensemble(self.thetas, [s.copy() for s in states], self.seed)


@dataclass
class CandidateEval:
    u: np.ndarray
    objective: float  # worst-case common area (exact TV at the bound maximizer)
    nominal_area: float  # common area of the fitted nominal densities
    bound: float
    feasible: bool
    reason: str = ""
    pdfs: list = field(default_factory=list)
    boxes: list = field(default_factory=list)
    solution: object = None
    terminal_states: list = field(default_factory=list, repr=False)
    outputs: list = field(default_factory=list, repr=False)

    def key(self, tie_tol):
        # lexicographic: worst case first, nominal separation breaks ties
        return (round(self.objective / tie_tol) if np.isfinite(self.objective) else np.inf, self.nominal_area)


@dataclass
class IntervalRecord:
    index: int
    interval: tuple
    candidates: list
    chosen: CandidateEval

    @property
    def u(self):
        return self.chosen.u


@dataclass
class DesignRecord:
    options: DesignOptions
    intervals: list = field(default_factory=list)
    failure: str | None = None

    @property
    def objectives(self):
        return np.array([r.chosen.objective for r in self.intervals])


def _batches(bank):
    """Group models that share a dynamics callable so they integrate as one array."""
    groups = {}
    for j, m in enumerate(bank.models):
        groups.setdefault(id(m.dynamics), (m.dynamics, []))[1].append(j)
    return list(groups.values())


def _propagate_bank(bank, ensemble, u, t0, t1, dt):
    states, overshoot = [None] * len(bank), [None] * len(bank)
    for dyn, idx in _batches(bank):
        x = np.concatenate([ensemble.states[j] for j in idx])
        th = np.concatenate([ensemble.thetas[j] for j in idx])
        x_end, over = propagate(dyn, x, th, u, t0, t1, dt, bank.state_box)
        splits = np.cumsum([ensemble.states[j].shape[0] for j in idx])[:-1]
        for j, xs, ov in zip(idx, np.split(x_end, splits), np.split(over, splits)):
            states[j], overshoot[j] = xs, ov
    return states, overshoot


def measure(bank, ensemble, states, u, time_index, seed):
    """Noisy scalar outputs of every model at one measurement time."""
    outs = []
    n = ensemble.size
    for j, model in enumerate(bank.models):
        v = noise_stream(seed, j, time_index).standard_normal((n, bank.n_y)) * np.sqrt(model.noise_var)
        y = np.asarray(model.output(states[j], u, ensemble.thetas[j], v))
        if y.ndim != 2 or y.shape[1] != 1:
            raise ValueError("TV objectives are defined for scalar outputs only")
        outs.append(y[:, 0])
    return outs


def evaluate_candidate(bank, ensemble, u, interval, options, time_index=0):
    """Worst-case common area at the end of ``interval`` under constant input ``u``."""
    u = np.asarray(u, dtype=float)
    lo, hi = bank.input_box[:, 0], bank.input_box[:, 1]
    if np.any(u < lo) or np.any(u > hi):
        raise ValueError(f"candidate input {u} outside the input box")
    t0, t1 = interval
    n_models = len(bank)
    try:
        states, overshoot = _propagate_bank(bank, ensemble, u, t0, t1, options.dt)
    except IntegrationDiverged as exc:
        return CandidateEval(u, np.inf, np.inf, np.inf, False, str(exc))
    outside = [float(np.mean(ov > options.clamp_tol)) for ov in overshoot]
    feasible = all(f <= options.violation_fraction for f in outside)
    reason = "" if feasible else f"state box left by fraction {max(outside):.3g} of samples"
    ys = measure(bank, ensemble, states, u, time_index, options.seed)
    radii = options.radii(n_models)
    fams = options.families(n_models)
    out_box = bank.output_box[0]
    try:
        pdfs = [fit_moments(OutputEnsemble(j, t1, y), f) for j, (y, f) in enumerate(zip(ys, fams))]
        boxes = [build_roi(p, r, out_box, j) for j, (p, r) in enumerate(zip(pdfs, radii))]
        area, sol = worst_case_common_area(boxes, fams)
        nominal = common_area(pdfs)
    except (ValueError, ArithmeticError) as exc:
        return CandidateEval(u, np.inf, np.inf, np.inf, False, f"fit failed: {exc}",
                             terminal_states=states, outputs=ys)
    return CandidateEval(u, area, nominal, sol.objective, feasible, reason, pdfs, boxes, sol, states, ys)


def _grid(bank, points):
    axes = [np.linspace(lo, hi, points) for lo, hi in bank.input_box]
    return [np.array(p) for p in itertools.product(*axes)]


def design_interval(bank, ensemble, interval, options, time_index=0):
    """Best constant input for one interval: coarse grid, then Nelder-Mead from the best grid point."""
    if len(bank) < 2:
        raise ValueError("the common-area objective is undefined with fewer than two models")
    lo, width = bank.input_box[:, 0], np.ptp(bank.input_box, axis=1)
    width = np.where(width > 0, width, 1.0)
    cache = {}

    def evaluate(u):
        key = tuple(np.round(u, 15))
        if key not in cache:
            cache[key] = evaluate_candidate(bank, ensemble, u, interval, options, time_index)
        return cache[key]

    grid = _grid(bank, options.grid_points)
    if options.workers > 1:
        with ThreadPoolExecutor(options.workers) as pool:
            for u, ev in zip(grid, pool.map(lambda u: evaluate_candidate(bank, ensemble, u, interval, options, time_index), grid)):
                cache[tuple(np.round(u, 15))] = ev
    else:
        for u in grid:
            evaluate(u)

    feasible = [ev for ev in cache.values() if ev.feasible]
    if not feasible:
        raise DesignInfeasible(interval)
    start = min(feasible, key=lambda ev: ev.key(options.tie_tol))

    if options.nm_maxfev > 0:
        def objective(z):
            u = lo + np.clip(z, 0.0, 1.0) * width
            ev = evaluate(u)
            return ev.objective if ev.feasible else _INFEASIBLE

        z0 = (start.u - lo) / width
        step = 0.5 / max(options.grid_points - 1, 1)
        simplex = [z0]
        for i in range(len(z0)):
            z = z0.copy()
            z[i] = z[i] + step if z[i] + step <= 1.0 else z[i] - step
            simplex.append(z)
        optimize.minimize(
            objective, z0, method="Nelder-Mead", bounds=[(0.0, 1.0)] * len(z0),
            options={"maxfev": options.nm_maxfev, "xatol": options.nm_xatol,
                     "fatol": options.nm_fatol, "initial_simplex": np.array(simplex)},
        )

    candidates = list(cache.values())
    best = min((ev for ev in candidates if ev.feasible), key=lambda ev: ev.key(options.tie_tol))
    return best.u, IntervalRecord(time_index, tuple(interval), candidates, best)


def run_procedure(bank, horizon, measurement_times, options, ensemble=None):
    """Design a piecewise-constant input over ``[0, horizon]``, one segment per measurement interval.

    Returns the schedule and the design record. If some interval has no
    feasible input the schedule covers the intervals designed so far and
    ``record.failure`` says where it stopped.
    """
    times = np.asarray(sorted(measurement_times), dtype=float)
    if times.size == 0 or times[0] <= 0 or times[-1] > horizon:
        raise ValueError("measurement times must lie in (0, horizon]")
    breakpoints = np.concatenate([[0.0], times[:-1]])
    if ensemble is None:
        ensemble = Ensemble.draw(bank, options.mc_count, options.seed)
    record = DesignRecord(options)
    values = []
    for k, (t0, t1) in enumerate(zip(breakpoints, times)):
        try:
            u, entry = design_interval(bank, ensemble, (t0, t1), options, time_index=k)
        except DesignInfeasible as exc:
            record.failure = str(exc)
            log.warning("design stopped: %s", exc)
            break
        log.info("interval %d [%g, %g]: u=%s worst-case area=%.6g", k, t0, t1, u, entry.chosen.objective)
        record.intervals.append(entry)
        values.append(u)
        ensemble = ensemble.with_states(entry.chosen.terminal_states)
    n = len(values)
    if n == 0:
        return None, record
    return InputSchedule(breakpoints[:n], np.array(values), horizon), record

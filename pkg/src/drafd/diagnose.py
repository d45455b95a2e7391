"""Apply a designed input to a bank realization and decide which model is acting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distfit import OutputEnsemble, fit_moments, pairwise_common_areas
from .inputdesign import Ensemble, _propagate_bank, measure
from .sysmodel import (
    InputSchedule,
    propagate,
    sample_initial_state,
    sample_parameters,
)

__all__ = [
    "EvaluationReport",
    "evaluate_schedule",
    "measurement_times",
    "simulate_realization",
    "decide",
    "decide_sequential",
]


def measurement_times(schedule):
    """Ends of the schedule's segments: every later breakpoint, then the horizon."""
    if schedule.horizon is None:
        raise ValueError("schedule has no horizon; pass measurement times explicitly")
    return np.concatenate([schedule.breakpoints[1:], [schedule.horizon]])


@dataclass
class EvaluationReport:
    times: np.ndarray
    areas: np.ndarray  # (n_times, n_models, n_models) pairwise 1 - TV
    pdfs: list  # per time, list of fitted densities
    observations: np.ndarray = field(default_factory=lambda: np.empty(0))
    realization: int | None = None

    @property
    def n_models(self):
        return self.areas.shape[1]

    @property
    def total_areas(self):
        iu = np.triu_indices(self.n_models, 1)
        return self.areas[:, iu[0], iu[1]].sum(axis=1)

    @property
    def pair_areas(self):
        """(n_times, n_pairs) series with pairs ordered (0,1), (0,2), ..., (1,2), ..."""
        iu = np.triu_indices(self.n_models, 1)
        return self.areas[:, iu[0], iu[1]]

    @property
    def pairs(self):
        return [(int(i), int(j)) for i, j in zip(*np.triu_indices(self.n_models, 1))]

    @property
    def final_pair_areas(self):
        return self.pair_areas[-1]

    @property
    def final_total_area(self):
        return float(self.total_areas[-1])

    def time_index(self, t_m):
        hits = np.nonzero(np.isclose(self.times, t_m))[0]
        if hits.size == 0:
            raise KeyError(f"no fitted densities at t={t_m:g} s")
        return int(hits[0])

    def likelihoods(self, observation, t_m):
        return np.array([p.pdf(observation) for p in self.pdfs[self.time_index(t_m)]])

    @property
    def decisions(self):
        if self.observations.size == 0:
            return np.empty(0, dtype=int)
        return np.array([decide(self, y, t) for y, t in zip(self.observations, self.times)])


def _segments(schedule, times):
    # split [0, t_last] at every breakpoint and measurement time
    cuts = np.union1d(schedule.breakpoints, times)
    cuts = cuts[cuts <= times[-1]]
    if cuts[0] > 0:
        cuts = np.concatenate([[0.0], cuts])
    return list(zip(cuts[:-1], cuts[1:]))


def evaluate_schedule(true_bank, schedule, mc_count, seed, times=None, dt=1.0, family="normal",
                      realization=None, realization_seed=None):
    """Propagate ``true_bank`` under ``schedule`` and record pairwise common areas at each measurement time.

    With ``realization`` set to a model index, one extra trajectory of that
    model is simulated (its own seeded streams) and its noisy outputs are
    stored as the observations to diagnose.
    """
    schedule.check_box(true_bank.input_box)
    times = measurement_times(schedule) if times is None else np.asarray(times, dtype=float)
    ens = Ensemble.draw(true_bank, mc_count, seed)
    states = ens.states
    fams = [family] * len(true_bank) if isinstance(family, str) else list(family)
    areas, pdfs = [], []
    k = 0
    for t0, t1 in _segments(schedule, times):
        u = schedule(t0)
        states, _ = _propagate_bank(true_bank, ens.with_states(states), u, t0, t1, dt)
        if k < len(times) and np.isclose(t1, times[k]):
            ys = measure(true_bank, ens, states, u, k, seed)
            fitted = [fit_moments(OutputEnsemble(j, t1, y), f) for j, (y, f) in enumerate(zip(ys, fams))]
            pdfs.append(fitted)
            areas.append(pairwise_common_areas(fitted))
            k += 1
    report = EvaluationReport(times, np.array(areas), pdfs, realization=realization)
    if realization is not None:
        rs = seed if realization_seed is None else realization_seed
        report.observations = simulate_realization(true_bank, schedule, realization, rs, times, dt)
    return report


def simulate_realization(bank, schedule, model_index, seed, times=None, dt=1.0):
    """Noisy outputs of one random realization of ``bank[model_index]`` at the measurement times."""
    times = measurement_times(schedule) if times is None else np.asarray(times, dtype=float)
    model = bank.models[model_index]
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(2, model_index)))
    theta = sample_parameters(model, rng)
    x = np.clip(sample_initial_state(model, rng), bank.state_box[:, 0], bank.state_box[:, 1])
    obs = []
    k = 0
    for t0, t1 in _segments(schedule, times):
        u = schedule(t0)
        x, _ = propagate(model.dynamics, x, theta, u, t0, t1, dt, bank.state_box)
        if k < len(times) and np.isclose(t1, times[k]):
            v = rng.standard_normal(bank.n_y) * np.sqrt(model.noise_var)
            obs.append(float(np.atleast_1d(model.output(x, u, theta, v))[0]))
            k += 1
    return np.array(obs)


def decide(report, observation, t_m):
    """Index of the fitted density with the highest value at ``observation`` (lowest index on ties)."""
    return int(np.argmax(report.likelihoods(observation, t_m)))


def decide_sequential(report, observations, times):
    """Decision from the product of per-time likelihoods up to the last given time."""
    logl = np.zeros(report.n_models)
    for y, t in zip(observations, times):
        with np.errstate(divide="ignore"):
            logl += np.log(report.likelihoods(y, t))
    return int(np.argmax(logl))

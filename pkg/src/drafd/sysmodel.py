"""Nonlinear model banks, seeded parameter sampling and fixed-step integration.

A model bank is an indexed list of competing models of one plant. Index 0 is
the faultless model, the remaining indices are fault scenarios. All models in
a bank share state, input and output dimensions.

Dynamics callables are written against a leading sample axis so that one call
advances a whole Monte Carlo ensemble::

    dynamics(x, u, theta) -> xdot     # x: (..., n_x), u: (n_u,), theta: (..., n_theta)
    output(x, u, theta, v) -> y       # y: (..., n_y)

The same callables work on a single trajectory (no leading axis).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

__all__ = [
    "ParamDist",
    "NonlinearModel",
    "ModelBank",
    "InputSchedule",
    "Trajectory",
    "IntegrationDiverged",
    "sample_stream",
    "noise_stream",
    "sample_parameters",
    "sample_initial_state",
    "rk4_step",
    "propagate",
    "integrate",
    "three_tank_bank",
    "THREE_TANK",
    "three_tank_rhs_reference",
]


class IntegrationDiverged(ArithmeticError):
    """Raised when the right-hand side produces a non-finite derivative."""

    def __init__(self, time, state):
        self.time = float(time)
        self.state = np.asarray(state)
        super().__init__(f"non-finite derivative at t={self.time:g} s, state={self.state!r}")


@dataclass(frozen=True)
class ParamDist:
    """Scalar distribution of one uncertain parameter.

    ``kind`` is ``"normal"`` (a=mean, b=variance), ``"uniform"`` (a=lo, b=hi)
    or ``"point"`` (a=value).
    """

    name: str
    kind: str
    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.kind == "normal":
            if not self.b > 0:
                raise ValueError(f"{self.name}: normal variance must be > 0, got {self.b}")
        elif self.kind == "uniform":
            if not self.a < self.b:
                raise ValueError(f"{self.name}: uniform needs lo < hi, got [{self.a}, {self.b}]")
        elif self.kind != "point":
            raise ValueError(f"{self.name}: unknown distribution kind {self.kind!r}")

    @classmethod
    def normal(cls, name, mean, variance):
        return cls(name, "normal", float(mean), float(variance))

    @classmethod
    def uniform(cls, name, lo, hi):
        return cls(name, "uniform", float(lo), float(hi))

    @classmethod
    def point(cls, name, value):
        return cls(name, "point", float(value))

    @property
    def mean(self):
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b)
        return self.a

    def draw(self, rng):
        if self.kind == "normal":
            return rng.normal(self.a, np.sqrt(self.b))
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b)
        return self.a


@dataclass
class NonlinearModel:
    """One member of a model bank.

    ``init_state`` is either a fixed vector of length n_x or an (n_x, 2)
    array of per-state uniform intervals.
    """

    name: str
    dynamics: Callable
    output: Callable
    param_dists: Sequence[ParamDist]
    init_state: np.ndarray
    noise_var: float = 0.0

    def __post_init__(self):
        self.init_state = np.asarray(self.init_state, dtype=float)
        self.param_dists = tuple(self.param_dists)

    @property
    def n_theta(self):
        return len(self.param_dists)

    @property
    def param_names(self):
        return [p.name for p in self.param_dists]

    def nominal_theta(self):
        return np.array([p.mean for p in self.param_dists])


@dataclass
class ModelBank:
    """Faultless model at index 0 followed by ``n_f >= 1`` fault models."""

    models: list
    state_box: np.ndarray
    input_box: np.ndarray
    output_box: np.ndarray
    state_names: tuple = ()
    input_names: tuple = ()

    def __post_init__(self):
        self.state_box = np.atleast_2d(np.asarray(self.state_box, dtype=float))
        self.input_box = np.atleast_2d(np.asarray(self.input_box, dtype=float))
        self.output_box = np.atleast_2d(np.asarray(self.output_box, dtype=float))
        if len(self.models) < 2:
            raise ValueError("a model bank needs a faultless model and at least one fault model")
        for box in (self.state_box, self.input_box, self.output_box):
            if box.shape[1] != 2 or np.any(box[:, 0] > box[:, 1]):
                raise ValueError(f"malformed box {box!r}")

    def __len__(self):
        return len(self.models)

    def __getitem__(self, j):
        return self.models[j]

    @property
    def n_f(self):
        return len(self.models) - 1

    @property
    def n_x(self):
        return self.state_box.shape[0]

    @property
    def n_u(self):
        return self.input_box.shape[0]

    @property
    def n_y(self):
        return self.output_box.shape[0]


@dataclass
class InputSchedule:
    """Piecewise-constant input: ``values[k]`` holds on [breakpoints[k], breakpoints[k+1])."""

    breakpoints: np.ndarray
    values: np.ndarray
    horizon: float | None = None

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.breakpoints.ndim != 1 or len(self.breakpoints) != len(self.values):
            raise ValueError("need one breakpoint per segment value")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if self.horizon is not None and self.breakpoints[-1] > self.horizon:
            raise ValueError("last breakpoint lies beyond the horizon")

    @classmethod
    def constant(cls, value, start=0.0, horizon=None):
        return cls([start], [np.atleast_1d(value)], horizon)

    def __len__(self):
        return len(self.breakpoints)

    def segment_index(self, t):
        return max(int(np.searchsorted(self.breakpoints, t, side="right")) - 1, 0)

    def __call__(self, t):
        return self.values[self.segment_index(t)]

    def check_box(self, input_box):
        box = np.atleast_2d(input_box)
        if self.values.shape[1] != box.shape[0]:
            raise ValueError(f"schedule has {self.values.shape[1]} inputs, bank expects {box.shape[0]}")
        bad = (self.values < box[:, 0]) | (self.values > box[:, 1])
        if np.any(bad):
            k, i = np.argwhere(bad)[0]
            raise ValueError(
                f"segment {k} input {i} = {self.values[k, i]!r} outside [{box[i, 0]}, {box[i, 1]}]"
            )


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    output_times: np.ndarray = field(default_factory=lambda: np.empty(0))


def sample_stream(seed, model_index, sample_index):
    """Generator for the parameter/initial-state draws of one ensemble member."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0, model_index, sample_index)))


def noise_stream(seed, model_index, time_index):
    """Generator for the measurement-noise draws of one model at one measurement time.

    Sample ``i`` of the ensemble takes the ``i``-th draw, so the stream is tied
    to indices and not to evaluation order.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1, model_index, time_index)))


def sample_parameters(model, rng):
    return np.array([p.draw(rng) for p in model.param_dists], dtype=float)


def sample_initial_state(model, rng):
    x0 = model.init_state
    if x0.ndim == 2:
        return rng.uniform(x0[:, 0], x0[:, 1])
    return x0.copy()


def rk4_step(f, x, u, theta, dt):
    k1 = f(x, u, theta)
    k2 = f(x + 0.5 * dt * k1, u, theta)
    k3 = f(x + 0.5 * dt * k2, u, theta)
    k4 = f(x + dt * k3, u, theta)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _step_sizes(t0, t1, dt):
    span = t1 - t0
    n = int(np.ceil(span / dt - 1e-9))
    if n <= 0:
        return np.empty(0)
    steps = np.full(n, float(dt))
    steps[-1] = span - dt * (n - 1)
    return steps


def propagate(dynamics, x, theta, u, t0, t1, dt, box=None, keep_path=False):
    """Advance ``x`` from ``t0`` to ``t1`` under the constant input ``u``.

    Works on a single state or an ensemble of shape (N, n_x). After every
    step the state is clamped to ``box``. Returns ``(x_end, overshoot)`` where
    ``overshoot`` is, per sample, the largest distance an unclamped step left
    the box (0 if it never did); with ``keep_path`` a third element holds the
    stacked states at every grid time including ``t0``. Dynamics carrying a
    ``fused_propagate`` attribute are handed to that compiled loop when no path
    is requested; it must agree with the generic loop bit for bit.
    """
    x = np.array(x, dtype=float)
    u = np.asarray(u, dtype=float)
    lo = hi = None
    if box is not None:
        box = np.asarray(box, dtype=float)
        lo, hi = box[:, 0], box[:, 1]
    fused = getattr(dynamics, "fused_propagate", None)
    if fused is not None and box is not None and not keep_path:
        x_end, overshoot = fused(x, theta, u, t0, t1, dt, box)
        return x_end.reshape(x.shape), overshoot.reshape(x.shape[:-1])
    overshoot = np.zeros(x.shape[:-1])
    path = [x.copy()] if keep_path else None
    t = t0
    for h in _step_sizes(t0, t1, dt):
        x_new = rk4_step(dynamics, x, u, theta, h)
        if not np.all(np.isfinite(x_new)):
            bad = np.argwhere(~np.isfinite(x_new))[0]
            state = x if x.ndim == 1 else x[tuple(bad[:-1])]
            raise IntegrationDiverged(t, state)
        if lo is not None:
            excess = np.maximum(lo - x_new, x_new - hi).max(axis=-1)
            np.maximum(overshoot, excess, out=overshoot)
            np.clip(x_new, lo, hi, out=x_new)
        x = x_new
        t += h
        if keep_path:
            path.append(x.copy())
    if keep_path:
        return x, overshoot, np.stack(path)
    return x, overshoot


def integrate(model, theta, x0, u, t_span, dt, state_box=None, measure_times=(), noise=None):
    """Integrate one trajectory of ``model`` with fixed-step RK4.

    ``u`` is an :class:`InputSchedule` (or a constant input vector). The step
    grid restarts at every schedule breakpoint, so integrating [0, t1] then
    [t1, t2] reproduces one call over [0, t2] exactly when the pieces are
    aligned with ``dt``. ``noise`` supplies one measurement-noise vector per
    entry of ``measure_times``; outputs are noise-free when omitted.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not isinstance(u, InputSchedule):
        u = InputSchedule.constant(u, start=t_span[0])
    t0, t1 = map(float, t_span)
    cuts = [t0] + [b for b in u.breakpoints if t0 < b < t1] + [float(m) for m in measure_times if t0 < m < t1]
    cuts = sorted(set(cuts)) + [t1]
    x = np.asarray(x0, dtype=float)
    times, states = [t0], [x.copy()]
    for a, b in zip(cuts[:-1], cuts[1:]):
        x, _, path = propagate(model.dynamics, x, theta, u(a), a, b, dt, state_box, keep_path=True)
        grid = a + np.concatenate([[0.0], np.cumsum(_step_sizes(a, b, dt))])
        grid[-1] = b
        times.extend(grid[1:])
        states.extend(path[1:])
    times = np.asarray(times)
    states = np.asarray(states)
    outputs = []
    for k, tm in enumerate(measure_times):
        i = int(np.argmin(np.abs(times - tm)))
        v = np.zeros(1) if noise is None else np.atleast_1d(noise[k])
        outputs.append(np.atleast_1d(model.output(states[i], u(tm), theta, v)))
    outputs = np.asarray(outputs) if outputs else np.empty((0, 0))
    return Trajectory(times, states, outputs, np.asarray(measure_times, dtype=float))


# --------------------------------------------------------------------------
# three-tank benchmark
# --------------------------------------------------------------------------

THREE_TANK = {
    "A": 0.0154,  # tank cross-section, m^2
    "Sp": 5e-5,  # connecting pipe cross-section, m^2
    "g": 9.81,
    "x_max": 0.75,
    "u_max": 1e-4,
    "noise_var": 0.025,
    "x0_range": (0.0, 0.15),
}

# (mean, variance) per parameter
_TANK_TABLES = {
    "nominal": {
        "c1": (1.0, 0.0025),
        "c2": (0.8, 0.0025),
        "c3": (1.0, 0.0025),
        "r": (0.002, 1e-6),
        "alpha": (0.6, 4e-4),
    },
    "true": {
        "c1": (1.0, 0.01),
        "c2": (1.0, 0.01),
        "c3": (1.0, 0.01),
        "r": (0.02, 1e-6),
        "alpha": (0.6, 4e-2),
    },
}


def three_tank_rhs_reference(x, u, theta):
    """Plain numpy form of the three-tank right-hand side (theta: c1, c2, c3, alpha, r)."""
    A, Sp, g = THREE_TANK["A"], THREE_TANK["Sp"], THREE_TANK["g"]
    c1, c2, c3, alpha, r = (theta[..., i] for i in range(5))
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    d13 = x1 - x3
    d32 = x3 - x2
    q13 = c1 * Sp * np.sign(d13) * np.sqrt(2 * g * np.abs(d13))
    q32 = c3 * Sp * np.sign(d32) * np.sqrt(2 * g * np.abs(d32))
    s2 = np.sqrt(2 * g * np.maximum(x2, 0.0))
    q20 = c2 * Sp * s2
    qf = c2 * np.pi * r**2 * s2
    u1 = alpha * u[0]
    return np.stack([(u1 - q13) / A, (u[1] + q32 - q20 - qf) / A, (q13 - q32) / A], axis=-1)


@numba.njit(cache=True, inline="always")
def _tank_f(x1, x2, x3, u1, u2, c1, c2, c3, alpha, r, A, Sp, g):
    d13 = x1 - x3
    d32 = x3 - x2
    q13 = c1 * Sp * np.sign(d13) * np.sqrt(2 * g * np.abs(d13))
    q32 = c3 * Sp * np.sign(d32) * np.sqrt(2 * g * np.abs(d32))
    s2 = np.sqrt(2 * g * max(x2, 0.0))
    q20 = c2 * Sp * s2
    qf = c2 * np.pi * (r * r) * s2
    return (alpha * u1 - q13) / A, (u2 + q32 - q20 - qf) / A, (q13 - q32) / A


@numba.njit(cache=True)
def _three_tank_kernel(x, u, theta, out, A, Sp, g):
    for i in range(x.shape[0]):
        out[i, 0], out[i, 1], out[i, 2] = _tank_f(x[i, 0], x[i, 1], x[i, 2], u[0], u[1], theta[i, 0], theta[i, 1],
                                                  theta[i, 2], theta[i, 3], theta[i, 4], A, Sp, g)
    return out


@numba.njit(cache=True)
def _three_tank_rk4_kernel(x, u, theta, steps, lo, hi, overshoot, A, Sp, g):
    # fused RK4 + clamp with the same operation order as rk4_step; samples are
    # the inner loop so independent work overlaps. Returns (step, sample) of
    # the first non-finite state, or (-1, -1).
    for s in range(steps.shape[0]):
        h = steps[s]
        for i in range(x.shape[0]):
            c1, c2, c3, al, r = theta[i, 0], theta[i, 1], theta[i, 2], theta[i, 3], theta[i, 4]
            y1, y2, y3 = x[i, 0], x[i, 1], x[i, 2]
            a1, a2, a3 = _tank_f(y1, y2, y3, u[0], u[1], c1, c2, c3, al, r, A, Sp, g)
            b1, b2, b3 = _tank_f(y1 + 0.5 * h * a1, y2 + 0.5 * h * a2, y3 + 0.5 * h * a3,
                                 u[0], u[1], c1, c2, c3, al, r, A, Sp, g)
            e1, e2, e3 = _tank_f(y1 + 0.5 * h * b1, y2 + 0.5 * h * b2, y3 + 0.5 * h * b3,
                                 u[0], u[1], c1, c2, c3, al, r, A, Sp, g)
            f1, f2, f3 = _tank_f(y1 + h * e1, y2 + h * e2, y3 + h * e3, u[0], u[1], c1, c2, c3, al, r, A, Sp, g)
            z1 = y1 + (h / 6.0) * (a1 + 2.0 * b1 + 2.0 * e1 + f1)
            z2 = y2 + (h / 6.0) * (a2 + 2.0 * b2 + 2.0 * e2 + f2)
            z3 = y3 + (h / 6.0) * (a3 + 2.0 * b3 + 2.0 * e3 + f3)
            if not (np.isfinite(z1) and np.isfinite(z2) and np.isfinite(z3)):
                return s, i
            ex = max(max(lo[0] - z1, z1 - hi[0]), max(lo[1] - z2, z2 - hi[1]), max(lo[2] - z3, z3 - hi[2]))
            if ex > overshoot[i]:
                overshoot[i] = ex
            x[i, 0] = min(max(z1, lo[0]), hi[0])
            x[i, 1] = min(max(z2, lo[1]), hi[1])
            x[i, 2] = min(max(z3, lo[2]), hi[2])
    return -1, -1


def _three_tank_propagate(x, theta, u, t0, t1, dt, box):
    """Fused ensemble propagation used by :func:`propagate` when a box is given."""
    x = np.array(np.reshape(x, (-1, 3)), dtype=np.float64, order="C")
    th = np.ascontiguousarray(np.broadcast_to(theta, (x.shape[0], 5)), dtype=np.float64)
    steps = _step_sizes(t0, t1, dt)
    overshoot = np.zeros(x.shape[0])
    s, i = _three_tank_rk4_kernel(x, np.asarray(u, dtype=np.float64), th, steps,
                                  np.ascontiguousarray(box[:, 0]), np.ascontiguousarray(box[:, 1]), overshoot,
                                  THREE_TANK["A"], THREE_TANK["Sp"], THREE_TANK["g"])
    if s >= 0:
        raise IntegrationDiverged(t0 + float(np.sum(steps[:s])), x[i].copy())
    return x, overshoot


def _three_tank_rhs(x, u, theta):
    # compiled twin of three_tank_rhs_reference; bitwise identical results
    shape = np.shape(x)
    x2 = np.ascontiguousarray(np.reshape(x, (-1, 3)), dtype=np.float64)
    th = np.ascontiguousarray(np.broadcast_to(theta, (x2.shape[0], 5)), dtype=np.float64)
    out = _three_tank_kernel(x2, np.asarray(u, dtype=np.float64), th, np.empty_like(x2),
                             THREE_TANK["A"], THREE_TANK["Sp"], THREE_TANK["g"])
    return out.reshape(shape)


_three_tank_rhs.fused_propagate = _three_tank_propagate


def _three_tank_output(x, u, theta, v):
    return x[..., 2:3] + v


def three_tank_bank(table="nominal", noise_var=None, x0_range=None, overrides=None):
    """Build the three-tank bank: faultless, Fault A (pump 1 gain), Fault B (tank 2 leak).

    ``table`` selects the ``"nominal"`` or ``"true"`` parameter distributions.
    ``overrides`` maps a parameter name to a :class:`ParamDist` (or a
    ``(mean, variance)`` pair) and replaces it in every model where the
    parameter is uncertain.

    Flow topology: pump 1 feeds T1, pump 2 feeds T2, T1 drains into T3, T3
    into T2, and T2 has the only outlet (plus the leak under Fault B). The
    figure holding these equations is not available in text, so the layout
    follows the standard benchmark and lives only in this builder.
    """
    if table not in _TANK_TABLES:
        raise ValueError(f"unknown three-tank parameter table {table!r}; choose from {sorted(_TANK_TABLES)}")
    tab = dict(_TANK_TABLES[table])
    noise_var = THREE_TANK["noise_var"] if noise_var is None else float(noise_var)
    lo, hi = THREE_TANK["x0_range"] if x0_range is None else x0_range
    overrides = dict(overrides or {})

    def dist(name):
        spec = overrides.get(name, tab[name])
        if isinstance(spec, ParamDist):
            return ParamDist(name, spec.kind, spec.a, spec.b)
        mean, var = spec
        return ParamDist.normal(name, mean, var) if var > 0 else ParamDist.point(name, mean)

    common = [dist("c1"), dist("c2"), dist("c3")]
    scenarios = [
        ("faultless", [ParamDist.point("alpha", 1.0), ParamDist.point("r", 0.0)]),
        ("fault_A", [dist("alpha"), ParamDist.point("r", 0.0)]),
        ("fault_B", [ParamDist.point("alpha", 1.0), dist("r")]),
    ]
    init = np.tile([lo, hi], (3, 1)) if hi > lo else np.full(3, lo)
    models = [
        NonlinearModel(name, _three_tank_rhs, _three_tank_output, common + extra, init, noise_var)
        for name, extra in scenarios
    ]
    x_max, u_max = THREE_TANK["x_max"], THREE_TANK["u_max"]
    return ModelBank(
        models,
        state_box=[[0.0, x_max]] * 3,
        input_box=[[0.0, u_max]] * 2,
        output_box=[[0.0, x_max]],
        state_names=("x1", "x2", "x3"),
        input_names=("u1", "u2"),
    )

"""Scenario configuration files.

A scenario is a YAML mapping. Every key is optional except ``bank``;
unknown keys are rejected. Example::

    bank: three-tank          # builtin name, or "package.module:factory"
    table: nominal            # parameter table used for design
    evaluation_table: true    # parameter table used by `evaluate`
    noise_var: 0.025          # measurement noise variance of y = x3 + v
    radius: [0, 0, 0]         # TV radius per model (or one number for all)
    family: normal            # normal | gamma | beta, or one per model
    horizon: 3000             # s
    dt: 1.0                   # integrator step, s
    measurement_interval: 100 # s; or give measurement_times: [...]
    mc_count: 2000
    seed: 1
    realization: 2            # model index injected as the "true" system in evaluate
    decision: pointwise       # pointwise | sequential (product of likelihoods so far)
    parameters:               # per-parameter overrides as [mean, variance]
      c2: [0.8, 0.0025]
    solver:
      grid_points: 6
      nm_maxfev: 40
      violation_fraction: 0.0
    output_dir: runs/c2

A factory named as ``module:callable`` is called with keyword arguments
``table``, ``noise_var`` and ``overrides`` and must return a ModelBank.
"""
from __future__ import annotations

import hashlib
import importlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .inputdesign import DesignOptions
from .sysmodel import three_tank_bank

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "PROFILES"]

PROFILES = {"paper": {"mc_count": 10000}, "desk": {"mc_count": 2000}}

_SOLVER_KEYS = {"grid_points", "nm_maxfev", "nm_xatol", "nm_fatol", "clamp_tol", "violation_fraction", "tie_tol",
                "workers"}


class ConfigError(ValueError):
    """Invalid scenario; the message names the offending field."""


@dataclass
class ScenarioConfig:
    bank: str = "three-tank"
    table: str = "nominal"
    evaluation_table: str = "true"
    noise_var: float | None = None
    radius: object = 0.0
    family: object = "normal"
    horizon: float = 3000.0
    dt: float = 1.0
    measurement_interval: float | None = 100.0
    measurement_times: list | None = None
    mc_count: int = 2000
    seed: int = 0
    realization: int | None = None
    decision: str = "pointwise"
    parameters: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    output_dir: str | None = None

    @classmethod
    def from_mapping(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(f"{name}: {msg}")

        need(isinstance(self.bank, str) and self.bank, "bank", "must name a builtin bank or module:factory")
        need(self.bank == "three-tank" or ":" in self.bank, "bank",
             f"unknown builtin {self.bank!r} (builtins: three-tank; or give module:factory)")
        for name in ("table", "evaluation_table"):
            need(getattr(self, name) in ("nominal", "true"), name, "must be 'nominal' or 'true'")
        need(self.noise_var is None or self.noise_var >= 0, "noise_var", "must be >= 0")
        r = np.atleast_1d(np.asarray(self.radius, dtype=float))
        for i, v in enumerate(r):
            need(0.0 <= v <= 1.0, f"radius[{i}]" if r.size > 1 else "radius", f"must lie in [0, 1], got {v}")
        fams = [self.family] if isinstance(self.family, str) else list(self.family)
        for i, f in enumerate(fams):
            need(f in ("normal", "gamma", "beta"), f"family[{i}]" if len(fams) > 1 else "family",
                 f"must be normal, gamma or beta, got {f!r}")
        need(self.horizon > 0, "horizon", "must be positive")
        need(self.dt > 0, "dt", "must be positive")
        need(self.realization is None or (isinstance(self.realization, int) and self.realization >= 0),
             "realization", "must be a model index")
        need(self.decision in ("pointwise", "sequential"), "decision", "must be 'pointwise' or 'sequential'")
        need(int(self.mc_count) >= 100, "mc_count", "must be at least 100")
        need(int(self.seed) >= 0, "seed", "must be a nonnegative integer")
        times = self.times()
        need(times.size > 0 and times[0] > 0 and times[-1] <= self.horizon and np.all(np.diff(times) > 0),
             "measurement_times", f"must be increasing and lie in (0, horizon={self.horizon}]")
        unknown = sorted(set(self.solver) - _SOLVER_KEYS)
        need(not unknown, "solver", f"unknown key(s) {', '.join(unknown)}")
        for name, spec in self.parameters.items():
            need(isinstance(spec, (list, tuple)) and len(spec) == 2 and spec[1] >= 0, f"parameters.{name}",
                 "must be [mean, variance] with variance >= 0")

    def times(self):
        if self.measurement_times is not None:
            return np.asarray(self.measurement_times, dtype=float)
        if self.measurement_interval is None or self.measurement_interval <= 0:
            raise ConfigError("measurement_interval: must be positive when measurement_times is absent")
        n = int(np.floor(self.horizon / self.measurement_interval + 1e-9))
        return self.measurement_interval * np.arange(1, n + 1, dtype=float)

    def build_bank(self, table=None):
        table = self.table if table is None else table
        overrides = {k: tuple(v) for k, v in self.parameters.items()}
        if self.bank == "three-tank":
            try:
                return three_tank_bank(table, noise_var=self.noise_var, overrides=overrides)
            except KeyError as exc:
                raise ConfigError(f"parameters: unknown three-tank parameter {exc}") from None
        module, _, attr = self.bank.partition(":")
        try:
            factory = getattr(importlib.import_module(module), attr)
        except (ImportError, AttributeError) as exc:
            raise ConfigError(f"bank: cannot load {self.bank!r}: {exc}") from None
        return factory(table=table, noise_var=self.noise_var, overrides=overrides)

    def design_options(self):
        n = len(self.build_bank())
        r = np.atleast_1d(np.asarray(self.radius, dtype=float))
        if r.size not in (1, n):
            raise ConfigError(f"radius: need 1 or {n} values, got {r.size}")
        return DesignOptions(radius=r if r.size > 1 else float(r[0]), family=self.family,
                             mc_count=int(self.mc_count), seed=int(self.seed), dt=float(self.dt), **self.solver)

    def digest(self):
        blob = json.dumps(asdict(self), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path, **overrides):
    """Read a scenario file; keyword overrides (e.g. seed, mc_count) replace file values when not None."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: not valid YAML: {exc}") from None
    data = dict(data or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioConfig.from_mapping(data)

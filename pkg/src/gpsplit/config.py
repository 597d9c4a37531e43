"""Run configuration: YAML schema, validation, defaults, and provenance.

A config document has four blocks: `problem` (physics), `grid` (box and
resolution), `run` (what to compute and how), `output` (artifact paths).
Unknown keys are rejected with their full path; every resolved value is
tagged "explicit" or "default" for the run manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .adaptive import ControllerParams
from .errors import ConfigError
from .model import ProblemSpec
from .spectral import GridSpec

RUN_MODES = ("evolve", "groundstate", "groundstate_then_evolve", "order_sweep",
             "energy_longterm", "quotient_check")

# decisive-parameter aliases used in figure headlines
_PROBLEM_ALIASES = {"C1": "alpha", "C2": "beta", "C3": "gamma", "C4": "theta"}

_PROBLEM_KEYS = {"J", "d", "alpha", "beta", "gamma", "delta", "theta", "n0"}
_GRID_KEYS = {"omega", "points"}
_RUN_KEYS = {"mode", "method", "tau0", "tol", "strategy", "t_end", "refine",
             "max_iter", "init", "energy_tol", "safety", "fac_min", "fac_max",
             "tau_min", "tau_max", "p_loc", "damping",
             "methods", "taus", "tolerances", "strategies", "fixed_steps",
             "reference_refine"}
_OUTPUT_KEYS = {"dir", "diagnostics", "snapshot_every", "full_volume"}

_DEFAULT_POINTS = {1: 512, 2: 512, 3: 100}


def default_refine(d: int, method_name: str) -> int:
    """Substep refinement of the parabolic nonlinear stage, by dimension."""
    if d == 1:
        return 1
    if d == 2:
        return 8 if method_name == "chin_modified4" else 4
    return 16


@dataclass
class RunConfig:
    problem: ProblemSpec
    grid_spec: GridSpec
    mode: str
    method: str
    tau0: float
    tol: float
    strategy: str
    t_end: float
    refine: int | None
    max_iter: int
    init: str
    energy_tol: float
    damping: float
    controller_overrides: dict
    methods: list
    taus: list
    tolerances: list
    strategies: list
    fixed_steps: list
    reference_refine: int
    out_dir: Path
    diagnostics_name: str
    snapshot_every: int
    full_volume: bool
    provenance: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def controller(self, tol: float | None = None,
                   strategy: str | None = None) -> ControllerParams:
        return ControllerParams(tol=self.tol if tol is None else tol,
                                strategy=self.strategy if strategy is None else strategy,
                                **self.controller_overrides)

    def resolved_refine(self, method_name: str | None = None) -> int:
        if self.refine is not None:
            return self.refine
        return default_refine(self.problem.d, method_name or self.method)


class _Block:
    """One config section with explicit/default bookkeeping."""

    def __init__(self, name, data, known, provenance):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{name}: expected a mapping, got {type(data).__name__}")
        self.name = name
        self.data = dict(data)
        self.provenance = provenance
        unknown = set(self.data) - known
        if unknown:
            raise ConfigError(f"{name}.{sorted(unknown)[0]}: unknown key")

    def get(self, key, default=None, required=False, kind=None):
        path = f"{self.name}.{key}"
        if key in self.data:
            value = self.data[key]
            self.provenance[path] = "explicit"
        else:
            if required:
                raise ConfigError(f"{path}: required key missing")
            value = default
            self.provenance[path] = "default"
        if value is not None and kind is not None:
            try:
                value = kind(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return value


def _resolve_aliases(problem_block, provenance):
    if problem_block is None:
        problem_block = {}
    if not isinstance(problem_block, dict):
        raise ConfigError("problem: expected a mapping")
    out = dict(problem_block)
    for alias, target in _PROBLEM_ALIASES.items():
        if alias in out:
            if target in out:
                raise ConfigError(f"problem.{alias}: conflicts with problem.{target}")
            out[target] = out.pop(alias)
            provenance[f"problem.{target}"] = f"explicit (as {alias})"
    return out


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML config document."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    unknown = set(raw) - {"problem", "grid", "run", "output"}
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown top-level block")

    provenance: dict = {}
    problem_data = _resolve_aliases(raw.get("problem"), provenance)
    pb = _Block("problem", problem_data, _PROBLEM_KEYS, provenance)
    J = pb.get("J", 1, kind=int)
    d = pb.get("d", 1, kind=int)
    try:
        problem = ProblemSpec(
            alpha=pb.get("alpha", required=True),
            beta=pb.get("beta", 0.0),
            gamma=pb.get("gamma", 0.0),
            delta=pb.get("delta", 0.0),
            theta=pb.get("theta", 0.0),
            n0=pb.get("n0", 1.0),
            J=J, d=d)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"problem: {exc}") from None

    gb = _Block("grid", raw.get("grid"), _GRID_KEYS, provenance)
    omega = gb.get("omega", 10.0)
    points = gb.get("points", _DEFAULT_POINTS[d])
    omega_t = tuple(np.broadcast_to(np.atleast_1d(np.asarray(omega, dtype=float)), (d,)))
    points_t = tuple(int(m) for m in
                     np.broadcast_to(np.atleast_1d(np.asarray(points)), (d,)))
    try:
        grid_spec = GridSpec(omega_t, points_t)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None

    rb = _Block("run", raw.get("run"), _RUN_KEYS, provenance)
    mode = rb.get("mode", required=True, kind=str)
    if mode not in RUN_MODES:
        raise ConfigError(f"run.mode: {mode!r} not in {RUN_MODES}")
    method = rb.get("method", "strang", kind=str)
    strategy = rb.get("strategy", "A", kind=str)
    if strategy not in ("A", "B"):
        raise ConfigError(f"run.strategy: {strategy!r} must be 'A' or 'B'")
    controller_overrides = {}
    for key in ("safety", "fac_min", "fac_max", "tau_min", "tau_max"):
        value = rb.get(key)
        if value is not None:
            controller_overrides[key] = float(value)
    p_loc = rb.get("p_loc")
    if p_loc is not None:
        controller_overrides["p_loc"] = int(p_loc)

    refine = rb.get("refine")
    ob = _Block("output", raw.get("output"), _OUTPUT_KEYS, provenance)
    config = RunConfig(
        problem=problem,
        grid_spec=grid_spec,
        mode=mode,
        method=method,
        tau0=rb.get("tau0", 0.1, kind=float),
        tol=rb.get("tol", 1e-6, kind=float),
        strategy=strategy,
        t_end=rb.get("t_end", 1.0, kind=float),
        refine=None if refine is None else int(refine),
        max_iter=rb.get("max_iter", 20000, kind=int),
        init=rb.get("init", "constant", kind=str),
        energy_tol=rb.get("energy_tol", 1e-15, kind=float),
        damping=rb.get("damping", 2.0, kind=float),
        controller_overrides=controller_overrides,
        methods=list(rb.get("methods",
                            ["lie", "strang", "blanes_moan4", "chin_modified4"])),
        taus=[float(t) for t in rb.get("taus", [2.0 ** (-k) for k in range(3, 11)])],
        tolerances=[float(t) for t in rb.get("tolerances",
                                             [10.0 ** (-k) for k in range(4, 9)])],
        strategies=list(rb.get("strategies", ["A", "B"])),
        fixed_steps=[int(n) for n in rb.get("fixed_steps", [500, 1000, 5000, 10000])],
        reference_refine=rb.get("reference_refine", 16, kind=int),
        out_dir=Path(ob.get("dir", "out", kind=str)),
        diagnostics_name=ob.get("diagnostics", "diagnostics.csv", kind=str),
        snapshot_every=ob.get("snapshot_every", 0, kind=int),
        full_volume=bool(ob.get("full_volume", False)),
        provenance=provenance, raw=raw)

    _validate_mode_requirements(config)
    return config


def _validate_mode_requirements(config: RunConfig) -> None:
    if config.mode in ("groundstate", "groundstate_then_evolve", "quotient_check"):
        if not np.all(config.problem.alpha < 0):
            raise ConfigError(
                "problem.alpha: imaginary-time propagation requires negative entries")
    if config.mode in ("evolve", "groundstate_then_evolve", "energy_longterm",
                       "order_sweep", "quotient_check"):
        if config.t_end <= 0:
            raise ConfigError("run.t_end: must be positive")
    if config.method not in ("adaptive", "lie", "strang", "yoshida4",
                             "blanes_moan4", "chin_modified4"):
        raise ConfigError(f"run.method: unknown method {config.method!r}")
    if config.init not in ("constant", "gaussian", "hermite", "thomas_fermi"):
        raise ConfigError(f"run.init: unknown initializer {config.init!r}")
    if config.tau0 <= 0:
        raise ConfigError("run.tau0: must be positive")
    if config.tol <= 0:
        raise ConfigError("run.tol: must be positive")


def apply_overrides(text: str, overrides) -> str:
    """Apply repeatable `block.key=value` overrides to a YAML document."""
    raw = yaml.safe_load(text) or {}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected block.key=value")
        dotted, value = item.split("=", 1)
        keys = dotted.strip().split(".")
        if len(keys) < 2:
            raise ConfigError(f"override {item!r}: expected block.key=value")
        node = raw
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {dotted!r}: {key} is not a mapping")
        try:
            node[keys[-1]] = yaml.safe_load(value)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r}: {exc}") from None
    return yaml.safe_dump(raw)


def load_config(path, overrides=()) -> RunConfig:
    text = Path(path).read_text()
    if overrides:
        text = apply_overrides(text, overrides)
    return parse_config(text)

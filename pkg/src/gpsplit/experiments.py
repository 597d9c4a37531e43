"""Experiment drivers: order sweeps, long-term energy, controller quotients,
and the ground-state-then-evolve pipeline.

Every driver writes plain CSV/JSON artifacts plus a manifest carrying the
config hash, the coefficient-table hash, and the transform tally, so a run
can be reproduced byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import io as gio
from .adaptive import ControllerParams, evolve
from .config import RunConfig
from .errors import ControllerFailureError, DivergedError
from .groundstate import StopRule, hermite_solution, init_state, propagate_imaginary
from .model import State
from .spectral import GridSpec, build_grid, discrete_norm
from .splitting import _CATALOG, method_catalog


def _build(config: RunConfig):
    return config.problem, build_grid(config.grid_spec)


def _is_linear(problem) -> bool:
    return (not np.any(problem.theta) and not np.any(problem.gamma)
            and np.all(problem.beta > 0))


def _initial_state(config: RunConfig, problem, grid, mode: str) -> State:
    kind = config.init
    if config.provenance.get("run.init") == "default":
        if mode == "real":
            kind = "hermite" if np.all(problem.beta > 0) else "constant"
        elif _is_linear(problem):
            kind = "constant"
        elif np.all(np.diag(problem.theta) > 0):
            kind = "thomas_fermi"
        else:
            kind = "gaussian"
    return init_state(problem, grid, kind, mode=mode)


def _driver(config: RunConfig, method_name: str):
    if method_name == "adaptive":
        return config.controller()
    return method_catalog(method_name)


def config_hash(config: RunConfig) -> str:
    blob = yaml.safe_dump(config.raw, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def coefficient_table_hash() -> str:
    parts = []
    for name in sorted(_CATALOG):
        m = _CATALOG[name]
        parts.append(f"{name}:{m.a!r}:{m.b!r}:{m.c!r}:{m.order}")
    return hashlib.sha256("|".join(parts).encode()).hexdigest()


def _write_manifest(out_dir: Path, config: RunConfig, outputs, transforms: int):
    manifest = {
        "mode": config.mode,
        "config_hash": config_hash(config),
        "coefficient_table_hash": coefficient_table_hash(),
        "transforms_total": int(transforms),
        "outputs": sorted(str(p) for p in outputs),
        "provenance": config.provenance,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def _fit_slope(taus, errs, floor=1e-13):
    pts = [(math.log(t), math.log(e)) for t, e in zip(taus, errs)
           if math.isfinite(e) and e > floor]
    if len(pts) < 2:
        return float("nan")
    xs, ys = zip(*pts)
    n = len(xs)
    xbar, ybar = sum(xs) / n, sum(ys) / n
    num = sum((x - xbar) * (y - ybar) for x, y in zip(xs, ys))
    den = sum((x - xbar) ** 2 for x in xs)
    return num / den


# --- order sweep ---------------------------------------------------------------


def _sweep_row(config, method_name, tau, reference):
    problem, grid = _build(config)
    state = _initial_state(config, problem, grid, "real")
    method = method_catalog(method_name)
    try:
        final, stats = evolve(problem, grid, state, config.t_end, method,
                              tau0=tau, refine=config.resolved_refine(method_name))
        diff = final.fields - reference
        return (method_name, tau, discrete_norm(grid, diff),
                float(np.max(np.abs(diff))), "ok", stats.transforms)
    except (DivergedError, ControllerFailureError) as exc:
        return (method_name, tau, float("nan"), float("nan"),
                f"diverged({exc})".replace(",", ";"), grid.counter.total)


def order_sweep(config: RunConfig, out_dir: Path, workers: int = 1):
    """Global error versus step size for each catalog method."""
    problem, grid = _build(config)
    if _is_linear(problem):
        reference = hermite_solution(problem, grid, config.t_end)
    else:
        state = _initial_state(config, problem, grid, "real")
        tau_ref = min(config.taus) / config.reference_refine
        reference, _ = evolve(problem, grid, state, config.t_end,
                              method_catalog("chin_modified4"), tau0=tau_ref,
                              refine=config.resolved_refine("chin_modified4"))
        reference = reference.fields

    jobs = [(m, tau) for m in config.methods for tau in config.taus]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda mt: _sweep_row(config, *mt, reference), jobs))
    else:
        rows = [_sweep_row(config, m, tau, reference) for m, tau in jobs]

    table = out_dir / "order_sweep.csv"
    _write_csv(table, ["method", "tau", "err_l2", "err_max", "status", "transforms"],
               rows)
    slope_rows = []
    for m in config.methods:
        sub = [(r[1], r[2], r[3]) for r in rows if r[0] == m and r[4] == "ok"]
        taus = [r[0] for r in sub]
        slope_rows.append((m, _fit_slope(taus, [r[1] for r in sub]),
                           _fit_slope(taus, [r[2] for r in sub]), len(sub)))
    slopes = out_dir / "order_sweep_slopes.csv"
    _write_csv(slopes, ["method", "slope_l2", "slope_max", "points"], slope_rows)
    return [table, slopes], {m: s for m, s, *_ in slope_rows}


# --- long-term energy conservation ---------------------------------------------


def _longterm_row(config, label, driver, tau0, strategy=None):
    problem, grid = _build(config)
    state = _initial_state(config, problem, grid, "real")
    records = []
    status = "ok"
    try:
        _, stats = evolve(problem, grid, state, config.t_end, driver, tau0=tau0,
                          refine=config.resolved_refine(), sink=records)
    except (DivergedError, ControllerFailureError) as exc:
        status = f"diverged({exc})".replace(",", ";")
        stats = None
    if not records:
        return None, (label, 0, 0, float("nan"), float("nan"), status)
    e0 = records[0].E
    m0 = records[0].mass_total
    drift = max(abs(r.E - e0) for r in records) / max(abs(e0), 1e-300)
    mdrift = max(abs(r.mass_total - m0) for r in records) / m0
    steps = records[-1].step
    return records, (label, steps, records[-1].transforms_cum, mdrift, drift, status)


def energy_longterm(config: RunConfig, out_dir: Path, workers: int = 1):
    """Energy drift under fixed-step standard methods and the adaptive pair."""
    jobs = []
    for name in config.methods:
        if name == "adaptive":
            continue
        for n in config.fixed_steps:
            tau = config.t_end / n
            jobs.append((f"{name}_N{n}", method_catalog(name), tau))
    for strategy in config.strategies:
        for tol in config.tolerances:
            params = config.controller(tol=tol, strategy=strategy)
            jobs.append((f"adaptive_{strategy}_tol{tol:.0e}", params, config.tau0))

    def run(job):
        label, driver, tau0 = job
        return _longterm_row(config, label, driver, tau0)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    outputs = []
    summary = []
    for (records, row), (label, *_rest) in zip(results, jobs):
        if records:
            keep = max(1, len(records) // 2000)
            path = out_dir / f"diag_{label}.csv"
            gio.write_diagnostics(path, records[::keep], config.problem.J)
            outputs.append(path)
        summary.append(row)
    table = out_dir / "energy_longterm.csv"
    _write_csv(table, ["label", "steps", "transforms", "mass_drift",
                       "energy_drift", "status"], summary)
    outputs.append(table)
    return outputs, summary


# --- controller quotient check --------------------------------------------------


def quotient_check(config: RunConfig, out_dir: Path, workers: int = 1):
    """Accepted-step counts over a tolerance sweep and their decade quotients."""
    def run(job):
        strategy, tol = job
        problem, grid = _build(config)
        state = _initial_state(config, problem, grid, "real")
        params = config.controller(tol=tol, strategy=strategy)
        _, stats = evolve(problem, grid, state, config.t_end, params,
                          tau0=config.tau0, refine=config.resolved_refine())
        return strategy, tol, stats.steps, stats.rejected

    jobs = [(s, tol) for s in config.strategies for tol in config.tolerances]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(job) for job in jobs]

    table = out_dir / "quotient_check.csv"
    _write_csv(table, ["strategy", "tol", "steps", "rejected"], rows)
    summary = []
    quotients = {}
    for strategy in config.strategies:
        sub = sorted([r for r in rows if r[0] == strategy], key=lambda r: -r[1])
        qs = [sub[i + 1][2] / sub[i][2] for i in range(len(sub) - 1)]
        q1s = [sub[i][1] / sub[i + 1][1] for i in range(len(sub) - 1)]
        mean_q = float(np.mean(qs)) if qs else float("nan")
        ratio = (float(np.mean([math.log(q1) / math.log(q2)
                                for q1, q2 in zip(q1s, qs)]))
                 if qs else float("nan"))
        quotients[strategy] = (mean_q, ratio)
        summary.append((strategy, mean_q, ratio))
    stable = out_dir / "quotient_summary.csv"
    _write_csv(stable, ["strategy", "mean_quotient", "ln_ratio"], summary)
    return [table, stable], quotients


# --- ground state then evolve ----------------------------------------------------


def _section_state(state: State, grid):
    """Modulus of the fields; for d=3 the x3 = 0 plane."""
    mods = np.abs(state.fields)
    if grid.d < 3:
        return State(mods.astype(complex), state.t, state.mode), grid.spec
    k0 = grid.shape[2] // 2  # x3 = 0 sits at index M/2
    spec2 = GridSpec(grid.spec.omega[:2], grid.spec.points[:2])
    return State(mods[:, :, :, k0].astype(complex), state.t, state.mode), spec2


def groundstate_then_evolve(config: RunConfig, out_dir: Path, workers: int = 1):
    """Imaginary-time ground state, then real-time propagation of it."""
    problem, grid = _build(config)
    state = _initial_state(config, problem, grid, "imaginary")
    stepper = _driver(config, config.method)
    gs_records = []
    result = propagate_imaginary(
        problem, grid, state, stepper, tau0=config.tau0,
        stop=StopRule(config.energy_tol, config.max_iter),
        refine=config.resolved_refine("chin_modified4"), sink=gs_records)

    outputs = []
    gs_state = State(result.phi.astype(complex), 0.0, "imaginary")
    snap = out_dir / "groundstate.gpss"
    gio.snapshot_write(gs_state, grid, snap)
    outputs.append(snap)
    diag = out_dir / "groundstate_diagnostics.csv"
    gio.write_diagnostics(diag, gs_records, problem.J)
    outputs.append(diag)
    info = {
        "converged": result.converged, "reason": result.reason,
        "iterations": result.iterations, "energy": result.energy,
        "mu": list(result.mu), "residual": result.residual,
    }

    summary = {"groundstate": info}
    if result.converged:
        ev_records = []
        real0 = State(result.phi.astype(complex), 0.0, "real")
        final, stats = evolve(problem, grid, real0, config.t_end,
                              config.controller(), tau0=config.tau0,
                              sink=ev_records)
        diag2 = out_dir / "evolve_diagnostics.csv"
        gio.write_diagnostics(diag2, ev_records, problem.J)
        outputs.append(diag2)
        sect, spec = _section_state(final, grid)
        snap2 = out_dir / "evolved_modulus.gpss"
        gio.snapshot_write(sect, build_grid(spec), snap2)
        outputs.append(snap2)
        drift = float(np.max(np.abs(np.abs(final.fields) - np.abs(result.phi))))
        summary["evolution"] = {
            "t_end": config.t_end, "steps": stats.steps,
            "rejected": stats.rejected, "transforms": stats.transforms,
            "max_modulus_drift": drift,
        }
    path = out_dir / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    outputs.append(path)
    return outputs, summary


# --- single-run drivers (CLI evolve / groundstate) --------------------------------


def run_evolve(config: RunConfig, out_dir: Path):
    problem, grid = _build(config)
    state = _initial_state(config, problem, grid, "real")
    records = []
    final, stats = evolve(problem, grid, state, config.t_end,
                          _driver(config, config.method), tau0=config.tau0,
                          refine=config.resolved_refine(), sink=records)
    diag = out_dir / config.diagnostics_name
    gio.write_diagnostics(diag, records, problem.J)
    snap = out_dir / "final.gpss"
    gio.snapshot_write(final, grid, snap)
    outputs = [diag, snap]
    _write_manifest(out_dir, config, outputs, grid.counter.total)
    return outputs, {"steps": stats.steps, "rejected": stats.rejected,
                     "transforms": stats.transforms}


def run_groundstate(config: RunConfig, out_dir: Path):
    problem, grid = _build(config)
    state = _initial_state(config, problem, grid, "imaginary")
    records = []
    result = propagate_imaginary(
        problem, grid, state, _driver(config, config.method), tau0=config.tau0,
        stop=StopRule(config.energy_tol, config.max_iter),
        refine=config.resolved_refine("chin_modified4"), sink=records)
    diag = out_dir / config.diagnostics_name
    gio.write_diagnostics(diag, records, problem.J)
    snap = out_dir / "groundstate.gpss"
    gio.snapshot_write(State(result.phi.astype(complex), 0.0, "imaginary"), grid, snap)
    info = out_dir / "groundstate.json"
    info.write_text(json.dumps({
        "converged": result.converged, "reason": result.reason,
        "iterations": result.iterations, "energy": result.energy,
        "mu": list(result.mu), "residual": result.residual}, indent=2) + "\n")
    outputs = [diag, snap, info]
    _write_manifest(out_dir, config, outputs, grid.counter.total)
    return outputs, result


_EXPERIMENTS = {
    "order_sweep": order_sweep,
    "energy_longterm": energy_longterm,
    "quotient_check": quotient_check,
    "groundstate_then_evolve": groundstate_then_evolve,
}


def run_experiment(config: RunConfig, out_dir=None, workers: int = 1):
    """Dispatch the configured experiment; returns (manifest, summary)."""
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config.mode == "evolve":
        outputs, summary = run_evolve(config, out)
        return outputs, summary
    if config.mode == "groundstate":
        outputs, summary = run_groundstate(config, out)
        return outputs, summary
    try:
        driver = _EXPERIMENTS[config.mode]
    except KeyError:
        raise ValueError(f"{config.mode!r} is not an experiment mode") from None
    outputs, summary = driver(config, out, workers=workers)
    _write_manifest(out, config, outputs, transforms=0)
    return outputs, summary

"""Embedded step pair and the step-size controller.

The error estimate is the discrete L2 distance between one step of the
4th-order modified scheme and one step of Strang from the same state,
normalized by the square root of the total mass target.  Strategy "A" uses
that distance directly (local order 3); strategy "B" scales it by tau^2
(local order 5), trading accuracy margin for fewer steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import ControllerFailureError, DivergedError
from .model import ProblemSpec, State
from .spectral import SpectralGrid, discrete_norm
from .splitting import MethodSpec, method_catalog, step

LOCAL_ORDER = {"A": 3, "B": 5}


@dataclass(frozen=True)
class ControllerParams:
    tol: float
    strategy: str = "A"
    safety: float = 0.9
    fac_min: float = 0.25
    fac_max: float = 2.0  # 1.0 reproduces the no-growth "paper mode"
    tau_min: float = 1e-12
    tau_max: float = math.inf
    p_loc: int | None = None  # controller exponent override
    max_rejects: int = 20

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.strategy not in LOCAL_ORDER:
            raise ValueError(f"strategy must be one of {sorted(LOCAL_ORDER)}")
        if not 0 < self.fac_min <= 1 <= self.fac_max:
            raise ValueError("need 0 < fac_min <= 1 <= fac_max")

    @property
    def local_order(self) -> int:
        return self.p_loc if self.p_loc is not None else LOCAL_ORDER[self.strategy]

    def paper_mode(self) -> "ControllerParams":
        return replace(self, fac_max=1.0)


@dataclass
class StepResult:
    state: State
    tau_used: float
    tau_next: float
    err: float
    accepted: bool


def _try_step(problem, grid, state, method, tau, refine, shift):
    try:
        return step(problem, grid, state, method, tau, refine, shift), None
    except DivergedError as exc:
        return None, exc


def embedded_step(problem: ProblemSpec, grid: SpectralGrid, state: State,
                  tau: float, params: ControllerParams,
                  refine: int = 1, shift=None) -> StepResult:
    """One trial step of the modified/Strang pair with acceptance decision.

    On acceptance the returned state is the modified-method result; on
    rejection the input state is handed back unchanged together with the
    shrunken next step size.
    """
    if not params.tau_min <= tau <= params.tau_max:
        raise ControllerFailureError(
            f"trial step {tau:.3e} outside [{params.tau_min:.3e}, {params.tau_max:.3e}]")
    modified, err_m = _try_step(problem, grid, state, method_catalog("chin_modified4"),
                                tau, refine, shift)
    ref, err_s = _try_step(problem, grid, state, method_catalog("strang"),
                           tau, refine, shift)
    if err_m is not None and err_s is not None:
        raise ControllerFailureError(
            f"both embedded sub-steps diverged at t={state.t:.6g}, tau={tau:.3e}: {err_m}")

    if err_m is None and err_s is None:
        raw = discrete_norm(grid, modified.fields - ref.fields)
        raw /= math.sqrt(problem.n0_total)
        err = tau**2 * raw if params.strategy == "B" else raw
    else:
        err = math.inf

    accepted = err <= params.tol
    if err == 0.0:
        factor = params.fac_max
    elif math.isinf(err):
        factor = params.fac_min
    else:
        factor = params.safety * (params.tol / err) ** (1.0 / params.local_order)
        factor = min(max(factor, params.fac_min), params.fac_max)
    tau_next = tau * factor
    if tau_next < params.tau_min:
        raise ControllerFailureError(
            f"controller drove tau to {tau_next:.3e} < tau_min={params.tau_min:.3e} "
            f"at t={state.t:.6g} (err={err:.3e}, tol={params.tol:.3e})")
    tau_next = min(tau_next, params.tau_max)
    return StepResult(state=modified if accepted else state, tau_used=tau,
                      tau_next=tau_next, err=err, accepted=accepted)


@dataclass
class EvolveStats:
    steps: int = 0
    rejected: int = 0
    transforms: int = 0
    tau_history: list = field(default_factory=list)


def evolve(problem: ProblemSpec, grid: SpectralGrid, state: State, t_end: float,
           driver, *, tau0: float | None = None, refine: int = 1, sink=None,
           record_every: int = 1, observe=None) -> tuple[State, EvolveStats]:
    """March a trajectory to t_end with fixed steps or the embedded pair.

    `driver` is a MethodSpec (fixed steps of size ~tau0, shrunk so an integer
    number lands exactly on t_end) or ControllerParams (adaptive; tau0 is the
    first trial step).  Each recorded step emits one diagnostics row through
    `sink`; `observe` defaults to model.observables.
    """
    from .model import observables as default_observe
    observe = observe or default_observe
    emit = sink if callable(sink) else (sink.append if sink is not None else None)
    if state.t >= t_end:
        raise ValueError(f"t_end={t_end} must exceed state.t={state.t}")
    if tau0 is None or tau0 <= 0:
        raise ValueError("tau0 must be a positive step size")
    stats = EvolveStats(transforms=-grid.counter.total)

    def record(st, tau, err, accepted):
        if emit is not None and stats.steps % record_every == 0:
            rec = observe(problem, grid, st, tau=tau, err_estimate=err,
                          accepted=accepted, step=stats.steps)
            emit(rec)

    if isinstance(driver, MethodSpec):
        n = max(1, math.ceil((t_end - state.t) / tau0 - 1e-12))
        tau = (t_end - state.t) / n
        for k in range(n):
            state = step(problem, grid, state, driver, tau, refine)
            stats.steps += 1
            stats.tau_history.append(tau)
            record(state, tau, float("nan"), True)
    else:
        params: ControllerParams = driver
        tau = tau0
        rejects = 0
        while state.t < t_end - 1e-12 * max(1.0, abs(t_end)):
            trial = min(tau, t_end - state.t)
            result = embedded_step(problem, grid, state, trial, params, refine)
            if result.accepted:
                state = result.state
                stats.steps += 1
                stats.tau_history.append(result.tau_used)
                rejects = 0
                record(state, result.tau_used, result.err, True)
            else:
                stats.rejected += 1
                rejects += 1
                if rejects >= params.max_rejects:
                    raise ControllerFailureError(
                        f"{rejects} consecutive rejections at t={state.t:.6g}")
            tau = result.tau_next
    stats.transforms += grid.counter.total
    return state, stats

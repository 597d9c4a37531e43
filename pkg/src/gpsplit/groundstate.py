"""Imaginary-time propagation, stationary-state initializers, and diagnostics.

The parabolic flow d/dt psi = -H(psi) with per-step renormalization drives
any reasonable positive initial state to the minimal-energy stationary pair
(Phi, mu) with H(Phi) = mu Phi.  Initializers: a flat profile, a Gaussian,
the exact harmonic-trap ground state of the linear problem, and the
zero-kinetic-energy (Thomas-Fermi) profile for strong self-interaction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adaptive import ControllerParams, embedded_step
from .errors import ControllerFailureError, DivergedError
from .model import (ProblemSpec, State, apply_h1, apply_h2, check_state,
                    energy_parts, observables, potential)
from .spectral import SpectralGrid, discrete_norm, forward, inverse
from .splitting import MethodSpec, step

INIT_KINDS = ("constant", "gaussian", "hermite", "thomas_fermi")


@dataclass(frozen=True)
class StopRule:
    energy_tol: float = 1e-15
    max_iter: int = 50_000

    def __post_init__(self):
        if self.energy_tol <= 0:
            raise ValueError("energy_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class GroundStateResult:
    phi: np.ndarray  # (J, *grid.shape), real
    mu: tuple
    energy: float
    iterations: int
    residual: float
    converged: bool
    reason: str  # "tolerance" | "max_iter" | "divergence"
    records: list = field(default_factory=list)

    def __post_init__(self):
        if self.converged and self.reason != "tolerance":
            raise ValueError("converged results must stop on tolerance")


def hermite_ground_state(problem: ProblemSpec, grid: SpectralGrid,
                         j: int) -> np.ndarray:
    """Exact harmonic-trap ground state of component j for the linear problem.

    Real Gaussian profile with squared norm n0_j; requires beta > 0 and
    alpha < 0 on every axis of the component.
    """
    a, b = problem.alpha[j], problem.beta[j]
    if np.any(a >= 0) or np.any(b <= 0):
        raise ValueError("hermite profile needs alpha < 0 and beta > 0")
    out = np.full(grid.shape, math.sqrt(problem.n0[j]) / np.pi ** (grid.d / 4.0))
    for i in range(grid.d):
        ratio = b[i] / (-a[i])
        x = grid.coord(i)
        out = out * ratio ** 0.125 * np.exp(-0.5 * np.sqrt(ratio) * x**2)
    return out


def hermite_mu(problem: ProblemSpec, j: int) -> float:
    """Stationary eigenvalue sum_i sqrt(-alpha_i beta_i) of the linear problem."""
    return float(np.sum(np.sqrt(-problem.alpha[j] * problem.beta[j])))


def hermite_solution(problem: ProblemSpec, grid: SpectralGrid, t: float) -> np.ndarray:
    """Exact linear-problem solution exp(-i mu_j t) Phi_j, stacked."""
    out = np.empty((problem.J, *grid.shape), dtype=complex)
    for j in range(problem.J):
        out[j] = np.exp(-1j * hermite_mu(problem, j) * t) * hermite_ground_state(
            problem, grid, j)
    return out


def thomas_fermi_mu(problem: ProblemSpec, j: int) -> float:
    """Closed-form chemical potential of the zero-kinetic-energy profile."""
    th = problem.theta[j, j]
    if th <= 0:
        raise ValueError("thomas_fermi requires a positive self-interaction")
    b = problem.beta[j]
    n0 = problem.n0[j]
    if problem.d == 1:
        return (9.0 / 16.0 * b[0] * th**2 * n0**2) ** (1.0 / 3.0)
    if problem.d == 2:
        return math.sqrt(2.0 / math.pi * math.sqrt(b[0] * b[1]) * th * n0)
    return (225.0 / (8.0 * math.pi) * b[0] * b[1] * b[2] * th**2 * n0**2) ** 0.2


def init_state(problem: ProblemSpec, grid: SpectralGrid, kind: str,
               mode: str = "imaginary") -> State:
    """Build a normalized real initial state of the requested profile."""
    if kind not in INIT_KINDS:
        raise ValueError(f"unknown initializer {kind!r}; choose from {INIT_KINDS}")
    fields = np.empty((problem.J, *grid.shape), dtype=complex)
    for j in range(problem.J):
        if kind == "constant":
            fields[j] = 1.0
        elif kind == "gaussian":
            r2 = sum(grid.coord(i) ** 2 for i in range(grid.d))
            fields[j] = np.exp(-0.5 * r2)
        elif kind == "hermite":
            fields[j] = hermite_ground_state(problem, grid, j)
            continue  # analytically normalized already
        else:
            mu_tf = thomas_fermi_mu(problem, j)
            W = (mu_tf - potential(problem, grid, j)) / problem.theta[j, j]
            fields[j] = np.sqrt(np.maximum(W, 0.0))
        nrm = discrete_norm(grid, fields[j])
        if nrm == 0.0:
            raise DivergedError(f"initializer {kind!r} produced a zero component")
        fields[j] *= math.sqrt(problem.n0[j]) / nrm
    return State(fields, t=0.0, mode=mode)


def renormalize(grid: SpectralGrid, state: State, n0) -> State:
    """Scale each component back to its squared-norm target."""
    fields = state.fields.copy()
    for j in range(state.J):
        nrm = discrete_norm(grid, fields[j])
        if nrm == 0.0 or not np.isfinite(nrm):
            raise DivergedError(f"component {j} norm {nrm} during renormalization",
                                t=state.t)
        fields[j] *= math.sqrt(n0[j]) / nrm
    return State(fields, state.t, state.mode)


def residual(problem: ProblemSpec, grid: SpectralGrid, phi: np.ndarray,
             mu) -> float:
    """Stationarity defect ||H(Phi) - mu Phi|| / ||Phi|| over all components."""
    fields = np.asarray(phi, dtype=complex)
    defect = np.empty_like(fields)
    for j in range(problem.J):
        defect[j] = (apply_h1(problem, grid, fields, j) + apply_h2(problem, fields, j)
                     - mu[j] * fields[j])
    return discrete_norm(grid, defect) / discrete_norm(grid, fields)


def _truncate_imag(state: State) -> State:
    scale = float(np.max(np.abs(state.fields))) or 1.0
    if float(np.max(np.abs(state.fields.imag))) > 1e-12 * scale:
        raise ValueError("imaginary-time propagation requires a real initial state")
    return State(state.fields.real.astype(complex), state.t, "imaginary")


def _finish(problem, grid, state, iterations, converged, reason, records):
    phi = np.ascontiguousarray(state.fields.real)
    e1, e2 = energy_parts(problem, grid, phi.astype(complex))
    mu = tuple((e1[j] + e2[j]) / problem.n0[j] for j in range(problem.J))
    return GroundStateResult(
        phi=phi, mu=mu, energy=float(np.sum(e1) + 0.5 * np.sum(e2)),
        iterations=iterations, residual=residual(problem, grid, phi, mu),
        converged=converged, reason=reason, records=records)


def propagate_imaginary(problem: ProblemSpec, grid: SpectralGrid, state: State,
                        stepper, tau0: float, stop: StopRule = StopRule(),
                        refine: int = 1, renorm_every: int = 1,
                        sink=None, shifted: bool = True) -> GroundStateResult:
    """Drive the parabolic flow with renormalization until the energy settles.

    `stepper` is a MethodSpec (fixed step tau0) or ControllerParams (embedded
    adaptive pair started at tau0).  Stops when the energy change per
    accepted step drops below stop.energy_tol, the iteration budget is
    exhausted, or the trajectory diverges.

    With `shifted` the integrated equation is the normalized flow
    d/dt psi = -(H(psi) - mu_hat psi), mu_hat re-estimated after every
    accepted step.  The raw flow with per-step rescaling carries a
    stationary bias of first order in tau for nonlinear problems (the
    amplitude decays within the step, re-weighting the cubic term), whereas
    the shifted flow's fixed point solves the stationary equation itself,
    so the residual scales with the method order.
    """
    problem.require_contractive()
    state = _truncate_imag(state)
    state = renormalize(grid, state, problem.n0)
    records = []
    emit = sink if callable(sink) else (sink.append if sink is not None else records.append)
    adaptive = isinstance(stepper, ControllerParams)
    tau = tau0
    shift = np.array(observables(problem, grid, state).mu) if shifted else None
    e_prev = None
    iterations = 0
    rejects = 0
    while iterations < stop.max_iter:
        try:
            if adaptive:
                result = embedded_step(problem, grid, state, tau, stepper, refine,
                                       shift)
                tau = result.tau_next
                if not result.accepted:
                    rejects += 1
                    if rejects >= stepper.max_rejects:
                        return _finish(problem, grid, state, iterations, False,
                                       "divergence", records)
                    continue
                rejects = 0
                tau_used, err = result.tau_used, result.err
                nxt = result.state
            else:
                tau_used, err = tau, float("nan")
                nxt = step(problem, grid, state, stepper, tau, refine, shift)
            check_state(problem, grid, nxt, context="(pre-renormalization)")
            iterations += 1
            if iterations % renorm_every == 0:
                nxt = renormalize(grid, nxt, problem.n0)
            state = nxt
        except (DivergedError, ControllerFailureError):
            return _finish(problem, grid, state, iterations, False, "divergence",
                           records)
        rec = observables(problem, grid, state, tau=tau_used, err_estimate=err,
                          accepted=True, step=iterations)
        if shifted:
            shift = np.array(rec.mu)
        emit(rec)
        if e_prev is not None and abs(rec.E - e_prev) < stop.energy_tol:
            return _finish(problem, grid, state, iterations, True, "tolerance",
                           records)
        e_prev = rec.E
    return _finish(problem, grid, state, iterations, False, "max_iter", records)


def _mode_flow_coefficients(grid: SpectralGrid, alpha_row, c: float, tau: float):
    """Entries of exp(tau * [[0, 1], [-lam, -c]]) per Fourier mode.

    lam is the weighted Laplacian symbol; the matrix couples a component and
    its velocity in the damped second-order descent flow.
    """
    lam = grid.weighted_lap_symbol(alpha_row)
    half_c = 0.5 * c
    disc = np.asarray(half_c**2 - lam, dtype=complex)
    om = np.sqrt(disc)
    x = om * tau
    cosh = np.cosh(x)
    # sinh(x)/x with a series fallback around x = 0
    small = np.abs(x) < 1e-6
    sinhc = np.where(small, 1.0 + x**2 / 6.0, np.sinh(np.where(small, 1.0, x))
                     / np.where(small, 1.0, x))
    decay = np.exp(-half_c * tau)
    m11 = decay * (cosh + half_c * tau * sinhc)
    m12 = decay * tau * sinhc
    m21 = decay * (-lam * tau * sinhc)
    m22 = decay * (cosh - half_c * tau * sinhc)
    return m11, m12, m21, m22


def momentum_descent(problem: ProblemSpec, grid: SpectralGrid, state: State,
                     damping: float, tau0: float, stop: StopRule = StopRule(),
                     refine: int = 1, sink=None,
                     shifted: bool = True) -> GroundStateResult:
    """Damped second-order descent to the stationary state.

    Integrates d/dt psi = v, d/dt v = -damping*v - H(psi) by Strang
    composition: a half kick of the velocity by the potential + nonlinear
    force, the exact per-mode flow of the kinetic + damping linear part,
    and another half kick.  The velocity starts at zero and is rescaled
    together with psi at each renormalization.  `shifted` applies the same
    chemical-potential offset as propagate_imaginary, for the same reason.
    """
    if damping <= 0:
        raise ValueError("damping must be positive")
    problem.require_contractive()
    state = _truncate_imag(state)
    state = renormalize(grid, state, problem.n0)
    records = []
    emit = sink if callable(sink) else (sink.append if sink is not None else records.append)
    psi = state.fields.copy()
    vel = np.zeros_like(psi)
    tau = tau0
    shift = (np.array(observables(problem, grid, state).mu) if shifted
             else np.zeros(problem.J))
    coeffs = [_mode_flow_coefficients(grid, problem.alpha[j], damping, tau)
              for j in range(problem.J)]
    e_prev = None
    iterations = 0

    def half_kick():
        for j in range(problem.J):
            force = -((potential(problem, grid, j) - shift[j]) * psi[j]
                      + apply_h2(problem, psi, j))
            vel[j] += 0.5 * tau * force

    while iterations < stop.max_iter:
        try:
            half_kick()
            for j in range(problem.J):
                m11, m12, m21, m22 = coeffs[j]
                pj = forward(grid, psi[j])
                vj = forward(grid, vel[j])
                psi[j] = inverse(grid, m11 * pj + m12 * vj)
                vel[j] = inverse(grid, m21 * pj + m22 * vj)
            half_kick()
            iterations += 1
            cur = State(psi, state.t + iterations * tau, "imaginary")
            check_state(problem, grid, cur, context="(momentum descent)")
            for j in range(problem.J):
                nrm = discrete_norm(grid, psi[j])
                if nrm == 0.0 or not np.isfinite(nrm):
                    raise DivergedError(f"component {j} norm {nrm}")
                scale = math.sqrt(problem.n0[j]) / nrm
                psi[j] *= scale
                vel[j] *= scale
        except DivergedError:
            return _finish(problem, grid, State(psi, 0.0, "imaginary"), iterations,
                           False, "divergence", records)
        rec = observables(problem, grid, State(psi, 0.0, "imaginary"), tau=tau,
                          accepted=True, step=iterations)
        if shifted:
            shift = np.array(rec.mu)
        emit(rec)
        if e_prev is not None and abs(rec.E - e_prev) < stop.energy_tol:
            return _finish(problem, grid, State(psi, 0.0, "imaginary"), iterations,
                           True, "tolerance", records)
        e_prev = rec.E
    return _finish(problem, grid, State(psi, 0.0, "imaginary"), iterations, False,
                   "max_iter", records)

"""Problem definition: coupled cubic Schrodinger systems with harmonic/lattice traps.

The system for components j = 1..J reads

    i dpsi_j/dt = Delta_{alpha_j} psi_j + V_j psi_j
                  + (sum_k theta_jk |psi_k|^2) psi_j

with V_j(x) = sum_i (beta_ji x_i^2 + gamma_ji sin^2(delta_ji x_i)).  This
module holds the parameter container, the split operator parts H1 (kinetic +
potential) and H2 (nonlinearity), the conserved functionals, and the
finite-difference directional derivative used as a test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import DivergedError
from .spectral import (SpectralGrid, discrete_inner, discrete_norm, forward,
                       laplacian_from_coef)

# runs are declared failed once total mass exceeds this multiple of the target
MASS_BLOWUP_FACTOR = 1e6


def _param_array(value, J: int, d: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full((J, d), float(arr))
    elif arr.ndim == 1:
        if arr.shape[0] == d:
            arr = np.tile(arr, (J, 1))
        elif arr.shape[0] == J:
            arr = np.repeat(arr[:, None], d, axis=1)
        else:
            raise ValueError(f"{name}: cannot broadcast shape {arr.shape} to ({J},{d})")
    if arr.shape != (J, d):
        raise ValueError(f"{name}: expected shape ({J},{d}), got {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Physical parameters of a J-component system on a d-dimensional grid.

    alpha, beta, gamma, delta have shape (J, d); theta has shape (J, J);
    n0 has shape (J,) and holds the squared-norm target of each component.
    Scalars and 1-d inputs broadcast.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray = 0.0
    delta: np.ndarray = 0.0
    theta: np.ndarray = 0.0
    n0: np.ndarray = 1.0
    J: int = 1
    d: int = 1

    def __post_init__(self):
        J, d = int(self.J), int(self.d)
        if J not in (1, 2):
            raise ValueError(f"component count must be 1 or 2, got {J}")
        if d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "d", d)
        for name in ("alpha", "beta", "gamma", "delta"):
            object.__setattr__(self, name, _param_array(getattr(self, name), J, d, name))
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim == 0:
            theta = np.full((J, J), float(theta))
        if theta.shape != (J, J):
            raise ValueError(f"theta: expected shape ({J},{J}), got {theta.shape}")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        n0 = np.atleast_1d(np.asarray(self.n0, dtype=float))
        if n0.shape == (1,) and J == 2:
            n0 = np.repeat(n0, 2)
        if n0.shape != (J,):
            raise ValueError(f"n0: expected shape ({J},), got {n0.shape}")
        n0.flags.writeable = False
        object.__setattr__(self, "n0", n0)
        if np.any(self.alpha == 0):
            raise ValueError("alpha entries must be nonzero")
        if np.any(self.beta < 0):
            raise ValueError("beta entries must be nonnegative")
        if np.any(n0 <= 0):
            raise ValueError("n0 entries must be positive")

    @property
    def n0_total(self) -> float:
        return float(np.sum(self.n0))

    def require_contractive(self):
        """Imaginary-time propagation needs strictly negative Laplacian weights."""
        if not np.all(self.alpha < 0):
            raise ValueError("imaginary-time propagation requires alpha < 0 on all axes")


@dataclass
class State:
    """J complex fields on the grid plus the evolution clock."""

    fields: np.ndarray  # (J, *grid.shape), complex128
    t: float = 0.0
    mode: str = "real"  # "real" | "imaginary"

    def __post_init__(self):
        self.fields = np.ascontiguousarray(self.fields, dtype=np.complex128)
        if self.mode not in ("real", "imaginary"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def J(self) -> int:
        return self.fields.shape[0]

    def copy(self) -> "State":
        return State(self.fields.copy(), self.t, self.mode)

    def with_fields(self, fields: np.ndarray) -> "State":
        return State(fields, self.t, self.mode)


@dataclass
class ObservableRecord:
    """Per-step diagnostics row."""

    t: float
    tau: float
    mass: tuple
    mass_total: float
    E1: float
    E2: float
    E: float
    mu: tuple
    err_estimate: float = float("nan")
    accepted: bool = True
    step: int = 0
    transforms_cum: int = 0


def new_state(grid: SpectralGrid, J: int, mode: str = "real", t: float = 0.0) -> State:
    return State(np.zeros((J, *grid.shape), dtype=np.complex128), t, mode)


@lru_cache(maxsize=None)
def potential(problem: ProblemSpec, grid: SpectralGrid, j: int) -> np.ndarray:
    """V_j sampled on the grid; cached per (problem, grid, component)."""
    V = np.zeros(grid.shape)
    for i in range(grid.d):
        x = grid.coord(i)
        b, g, dlt = problem.beta[j, i], problem.gamma[j, i], problem.delta[j, i]
        V = V + b * x**2 + g * np.sin(dlt * x) ** 2
    V.flags.writeable = False
    return V


def potential_gradient(problem: ProblemSpec, grid: SpectralGrid, j: int,
                       axis: int) -> np.ndarray:
    """Analytic dV_j/dx_axis as a broadcastable per-axis array."""
    x = grid.coord(axis)
    b, g, dlt = problem.beta[j, axis], problem.gamma[j, axis], problem.delta[j, axis]
    return 2 * b * x + g * dlt * np.sin(2 * dlt * x)


@lru_cache(maxsize=None)
def _potential_axis_lap(problem: ProblemSpec, grid: SpectralGrid, j: int,
                        axis: int) -> np.ndarray:
    # analytic d^2 V_j / dx_axis^2
    x = grid.coord(axis)
    b, g, dlt = problem.beta[j, axis], problem.gamma[j, axis], problem.delta[j, axis]
    out = 2 * b + 2 * g * dlt**2 * np.cos(2 * dlt * x)
    out.flags.writeable = False
    return out


def potential_weighted_laplacian(problem: ProblemSpec, grid: SpectralGrid, j: int,
                                 alpha_row) -> np.ndarray:
    """Analytic sum_i alpha_i d^2 V_j / dx_i^2."""
    out = np.zeros(grid.shape)
    for i in range(grid.d):
        out = out + alpha_row[i] * _potential_axis_lap(problem, grid, j, i)
    return out


def nonlinear_density(problem: ProblemSpec, fields: np.ndarray, j: int) -> np.ndarray:
    """sum_k theta_jk |psi_k|^2, the multiplier of the cubic term."""
    dens = np.zeros(fields.shape[1:])
    for k in range(problem.J):
        th = problem.theta[j, k]
        if th != 0.0:
            dens += th * np.abs(fields[k]) ** 2
    return dens


def apply_h1(problem: ProblemSpec, grid: SpectralGrid, fields: np.ndarray,
             j: int) -> np.ndarray:
    """H1_j(psi) = Delta_{alpha_j} psi_j + V_j psi_j (spectral Laplacian)."""
    coef = forward(grid, fields[j])
    return laplacian_from_coef(grid, coef, problem.alpha[j]) + potential(problem, grid, j) * fields[j]


def apply_h2(problem: ProblemSpec, fields: np.ndarray, j: int) -> np.ndarray:
    """H2_j(psi) = (sum_k theta_jk |psi_k|^2) psi_j, pointwise."""
    return nonlinear_density(problem, fields, j) * fields[j]


def apply_h(problem: ProblemSpec, grid: SpectralGrid, fields: np.ndarray) -> np.ndarray:
    """Full right-hand side H(psi) = H1(psi) + H2(psi), stacked over components."""
    out = np.empty_like(fields)
    for j in range(problem.J):
        out[j] = apply_h1(problem, grid, fields, j) + apply_h2(problem, fields, j)
    return out


def energy_parts(problem: ProblemSpec, grid: SpectralGrid, fields: np.ndarray):
    """Per-component (E1_j, E2_j).

    The kinetic contribution is evaluated in coefficient space as
    sum_m lambda_alpha_m |psi_m|^2, which is real by construction and avoids
    cancellation in <Delta psi, psi>.
    """
    w = grid.cell_volume
    e1 = np.zeros(problem.J)
    e2 = np.zeros(problem.J)
    for j in range(problem.J):
        coef = forward(grid, fields[j])
        lam = grid.weighted_lap_symbol(problem.alpha[j])
        dens = np.abs(fields[j]) ** 2
        e1[j] = float(np.sum(lam * np.abs(coef) ** 2)) + w * float(
            np.sum(potential(problem, grid, j) * dens))
        e2[j] = w * float(np.sum(nonlinear_density(problem, fields, j) * dens))
    return e1, e2


def observables(problem: ProblemSpec, grid: SpectralGrid, state: State, *,
                tau: float = float("nan"), err_estimate: float = float("nan"),
                accepted: bool = True, step: int = 0) -> ObservableRecord:
    """Mass, energy split, and chemical potentials of the current state."""
    mass = tuple(
        discrete_norm(grid, state.fields[j]) ** 2 for j in range(problem.J))
    e1, e2 = energy_parts(problem, grid, state.fields)
    mu = tuple((e1[j] + e2[j]) / problem.n0[j] for j in range(problem.J))
    E1, E2 = float(np.sum(e1)), float(np.sum(e2))
    return ObservableRecord(
        t=state.t, tau=tau, mass=mass, mass_total=float(sum(mass)),
        E1=E1, E2=E2, E=E1 + 0.5 * E2, mu=mu,
        err_estimate=err_estimate, accepted=accepted, step=step,
        transforms_cum=grid.counter.total)


def energy(problem: ProblemSpec, grid: SpectralGrid, fields: np.ndarray) -> float:
    e1, e2 = energy_parts(problem, grid, fields)
    return float(np.sum(e1) + 0.5 * np.sum(e2))


def check_state(problem: ProblemSpec, grid: SpectralGrid, state: State, *,
                context: str = "") -> None:
    """Raise DivergedError on non-finite entries or runaway mass."""
    if not np.all(np.isfinite(state.fields)):
        raise DivergedError(f"non-finite field entries {context}".strip(), t=state.t)
    mass = discrete_norm(grid, state.fields) ** 2
    if mass > MASS_BLOWUP_FACTOR * problem.n0_total:
        raise DivergedError(
            f"mass {mass:.3e} exceeds {MASS_BLOWUP_FACTOR:.0e} x target {context}".strip(),
            t=state.t)


def gateaux_fd(F: Callable[[np.ndarray], np.ndarray], v: np.ndarray,
               w: np.ndarray, eps: float) -> np.ndarray:
    """Central-difference directional derivative (F(v+eps*w) - F(v-eps*w)) / (2 eps).

    Test-side oracle for derivative identities; eps is used as given, callers
    are responsible for scaling it to the direction's magnitude.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    return (F(v + eps * w) - F(v - eps * w)) / (2 * eps)

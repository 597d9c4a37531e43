"""Canonical benchmark problems shared by tests and experiment scripts.

The harmonic trap with alpha = -1/2, beta = 1/2 per axis, box [-10, 10]^d.
With theta = 0 the exact solution is the Gaussian stationary state; with
theta > 0 the same Gaussian serves as a smooth initial profile.
"""

from __future__ import annotations

from .model import ProblemSpec, State
from .spectral import GridSpec, SpectralGrid, build_grid
from .groundstate import hermite_ground_state, hermite_mu, hermite_solution

DEFAULT_POINTS = {1: 512, 2: 128, 3: 64}


def harmonic_problem(d: int = 1, theta: float = 0.0, J: int = 1,
                     n0=1.0) -> ProblemSpec:
    return ProblemSpec(alpha=-0.5, beta=0.5, theta=theta, n0=n0, J=J, d=d)


def two_component_problem(d: int = 1, coupling: float = 0.5) -> ProblemSpec:
    """Asymmetric two-component system with symmetric cross coupling."""
    return ProblemSpec(
        alpha=[[-0.5] * d, [-0.25] * d],
        beta=[[0.5] * d, [0.75] * d],
        theta=[[1.0, coupling], [coupling, 0.8]],
        n0=[1.0, 1.0], J=2, d=d)


def default_grid(d: int = 1, points: int | None = None,
                 omega: float = 10.0) -> SpectralGrid:
    m = points if points is not None else DEFAULT_POINTS[d]
    return build_grid(GridSpec((omega,) * d, (m,) * d))


def hermite_initial_state(problem: ProblemSpec, grid: SpectralGrid,
                          mode: str = "real") -> State:
    fields = hermite_solution(problem, grid, 0.0)
    return State(fields, t=0.0, mode=mode)


__all__ = [
    "harmonic_problem", "two_component_problem", "default_grid",
    "hermite_initial_state", "hermite_ground_state", "hermite_mu",
    "hermite_solution", "DEFAULT_POINTS",
]

"""Pseudospectral operator-splitting solver for Gross-Pitaevskii systems."""

from .adaptive import ControllerParams, StepResult, embedded_step, evolve
from .commutators import (CommutatorOutput, commutator_imaginary,
                          commutator_oracle, commutator_real)
from .errors import (ConfigError, ControllerFailureError, DivergedError,
                     FlowOverflowError, GpsplitError, SnapshotError)
from .groundstate import (GroundStateResult, StopRule, init_state,
                          momentum_descent, propagate_imaginary, renormalize,
                          residual)
from .model import (ObservableRecord, ProblemSpec, State, apply_h1, apply_h2,
                    gateaux_fd, observables, potential)
from .spectral import (GridSpec, SpectralGrid, build_grid, discrete_inner,
                       discrete_norm, kinetic_flow, spectral_gradient, transform)
from .splitting import (MethodSpec, method_catalog, nonlinear_flow_imaginary,
                        nonlinear_flow_real, step)

__version__ = "0.1.0"

__all__ = [
    "ControllerParams", "StepResult", "embedded_step", "evolve",
    "CommutatorOutput", "commutator_imaginary", "commutator_oracle",
    "commutator_real",
    "ConfigError", "ControllerFailureError", "DivergedError",
    "FlowOverflowError", "GpsplitError", "SnapshotError",
    "GroundStateResult", "StopRule", "init_state", "momentum_descent",
    "propagate_imaginary", "renormalize", "residual",
    "ObservableRecord", "ProblemSpec", "State", "apply_h1", "apply_h2",
    "gateaux_fd", "observables", "potential",
    "GridSpec", "SpectralGrid", "build_grid", "discrete_inner",
    "discrete_norm", "kinetic_flow", "spectral_gradient", "transform",
    "MethodSpec", "method_catalog", "nonlinear_flow_imaginary",
    "nonlinear_flow_real", "step",
]

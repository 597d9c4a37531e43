"""Splitting method catalog and the composed time step.

A step with coefficients (a_i, b_i, c_i), i = 1..s, applies in order: the
exact kinetic flow over a_i*tau, then the nonlinear stage over tau with
weight b_i and commutator weight c_i.  The kinetic part is diagonal in
coefficient space; the nonlinear stage is an exact pointwise exponential in
real time (the stage multiplier is invariant along its own flow) and a
Runge-Kutta/Euler composite in imaginary time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .commutators import commutator_fields
from .errors import DivergedError, FlowOverflowError
from .model import ProblemSpec, State, nonlinear_density, potential
from .spectral import MAX_EXP_REAL, MODE_FACTOR, SpectralGrid, kinetic_flow

METHOD_NAMES = ("lie", "strang", "yoshida4", "blanes_moan4", "chin_modified4")


@dataclass(frozen=True)
class MethodSpec:
    """Stage coefficients of one splitting scheme."""

    name: str
    a: tuple
    b: tuple
    c: tuple
    order: int

    def __post_init__(self):
        if not len(self.a) == len(self.b) == len(self.c):
            raise ValueError("coefficient tuples must share a length")
        for s, total in (("a", sum(self.a)), ("b", sum(self.b))):
            if abs(total - 1.0) > 1e-14:
                raise ValueError(f"{self.name}: sum({s}) = {total!r}, expected 1")

    @property
    def stages(self) -> int:
        return len(self.a)

    @property
    def modified(self) -> bool:
        return any(ci != 0.0 for ci in self.c)

    @property
    def positive(self) -> bool:
        return all(ai >= 0 for ai in self.a) and all(bi >= 0 for bi in self.b)


def _build_catalog():
    cbrt2 = 2.0 ** (1.0 / 3.0)
    y_b2 = (1.0 - cbrt2 - 0.5 * cbrt2**2) / 6.0
    y_b1 = 0.5 - y_b2
    y_a2 = 1.0 - 2.0 * y_b2
    y_a3 = 4.0 * y_b2 - 1.0

    # optimised 4th-order scheme of Blanes and Moan (6 inner stages,
    # palindromic); the two derived coefficients close the consistency sums
    bm_a1 = 0.0792036964311957
    bm_a2 = 0.3531729060497740
    bm_a3 = -0.0420650803577195
    bm_a4 = 1.0 - 2.0 * (bm_a1 + bm_a2 + bm_a3)
    bm_b1 = 0.209515106613362
    bm_b2 = -0.143851773179818
    bm_b3 = 0.5 - bm_b1 - bm_b2

    zero = lambda n: (0.0,) * n
    return {
        "lie": MethodSpec("lie", (1.0,), (1.0,), zero(1), 1),
        "strang": MethodSpec("strang", (0.0, 1.0), (0.5, 0.5), zero(2), 2),
        "yoshida4": MethodSpec(
            "yoshida4", (0.0, y_a2, y_a3, y_a2), (y_b1, y_b2, y_b2, y_b1),
            zero(4), 4),
        "blanes_moan4": MethodSpec(
            "blanes_moan4",
            (bm_a1, bm_a2, bm_a3, bm_a4, bm_a3, bm_a2, bm_a1),
            (bm_b1, bm_b2, bm_b3, bm_b3, bm_b2, bm_b1, 0.0),
            zero(7), 4),
        "chin_modified4": MethodSpec(
            "chin_modified4", (0.0, 0.5, 0.5), (1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0),
            (0.0, -1.0 / 72.0, 0.0), 4),
    }


_CATALOG = _build_catalog()
_VERIFIED = False


def method_catalog(name: str) -> MethodSpec:
    """Look up a splitting scheme by name; validates the transcribed
    coefficients against the classical order conditions on first use."""
    global _VERIFIED
    try:
        method = _CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; choose from {METHOD_NAMES}") from None
    if not _VERIFIED:
        _VERIFIED = True
        for m in _CATALOG.values():
            defects = composition_series_defect(m)
            bad = [k for k in range(m.order + 1) if defects[k] > 1e-12]
            if bad:
                raise AssertionError(
                    f"{m.name}: order-condition defect at tau powers {bad}: {defects}")
    return method


# --- series-based order verification -----------------------------------------


def _poly_mul(p, q, deg):
    out = [0.0 * p[0] for _ in range(deg + 1)]
    for i, pi in enumerate(p):
        for jq, qj in enumerate(q):
            if i + jq <= deg:
                out[i + jq] = out[i + jq] + pi @ qj
    return out


def _poly_exp(exponent, deg, eye):
    # exp of a matrix-valued polynomial with zero constant term
    out = [eye] + [0.0 * eye for _ in range(deg)]
    term = out[:]
    for k in range(1, deg + 1):
        term = _poly_mul(term, exponent, deg)
        fact = 1.0 / math.factorial(k)
        for i in range(deg + 1):
            out[i] = out[i] + fact * term[i]
    return out


def composition_series_defect(method: MethodSpec, deg: int = 5, seed: int = 7):
    """Per-power defect of the splitting composition on a random linear pair.

    Expands prod_i exp(a_i tau A) exp(b_i tau B + c_i tau^3 [B,[B,A]]) and
    exp(tau (A+B)) as matrix polynomials in tau and returns the max-norm
    difference of each tau^k coefficient, k = 0..deg.  An order-p scheme has
    zero defect (to round-off) for k <= p.
    """
    rng = np.random.default_rng(seed)
    n = 4
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, n))
    G = B @ B @ A - 2 * B @ A @ B + A @ B @ B
    eye = np.eye(n)
    zero = np.zeros((n, n))

    series = [eye] + [zero for _ in range(deg)]
    for a, b, c in zip(method.a, method.b, method.c):
        if a != 0.0:
            factor = _poly_exp([zero, a * A] + [zero] * (deg - 1), deg, eye)
            series = _poly_mul(factor, series, deg)
        if b != 0.0 or c != 0.0:
            exponent = [zero, b * B, zero, c * G] + [zero] * (deg - 3)
            factor = _poly_exp(exponent[: deg + 1], deg, eye)
            series = _poly_mul(factor, series, deg)
    target = _poly_exp([zero, A + B] + [zero] * (deg - 1), deg, eye)
    return [float(np.max(np.abs(series[k] - target[k]))) for k in range(deg + 1)]


# --- nonlinear stage flows ----------------------------------------------------


def _check_exponent(exponent):
    max_re = float(np.max(exponent.real))
    if max_re > MAX_EXP_REAL:
        raise FlowOverflowError(
            f"nonlinear flow exponent real part {max_re:.1f} exceeds {MAX_EXP_REAL}")


def _nonlinear_real_inplace(problem, grid, fields, b, c, tau):
    # stage multiplier frozen at the initial value; exact flow
    if c != 0.0:
        mult = commutator_fields(problem, grid, fields, "real").multiplier
    for j in range(problem.J):
        exponent = (-1j * tau * b) * (potential(problem, grid, j)
                                      + nonlinear_density(problem, fields, j))
        if c != 0.0:
            exponent = exponent + (c * tau**3) * mult[j]
        _check_exponent(exponent)
        fields[j] *= np.exp(exponent)


def _f2_imaginary(problem, grid, fields, shift):
    out = np.empty_like(fields)
    for j in range(problem.J):
        out[j] = -(potential(problem, grid, j) - shift[j]
                   + nonlinear_density(problem, fields, j)) * fields[j]
    return out


def _rk4_imaginary(problem, grid, fields, b, duration, nsub, shift):
    # classical one-step method for d/dt u = b * F2(u), pointwise
    h = duration / nsub
    for _ in range(nsub):
        k1 = b * _f2_imaginary(problem, grid, fields, shift)
        k2 = b * _f2_imaginary(problem, grid, fields + 0.5 * h * k1, shift)
        k3 = b * _f2_imaginary(problem, grid, fields + 0.5 * h * k2, shift)
        k4 = b * _f2_imaginary(problem, grid, fields + h * k3, shift)
        fields += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return fields


def _nonlinear_imag_inplace(problem, grid, fields, b, c, tau, refine, shift):
    # Strang composite: half F2 flow, one Euler kick with the commutator,
    # half F2 flow; each piece subdivided into `refine` equal substeps
    if b != 0.0:
        _rk4_imaginary(problem, grid, fields, b, 0.5 * tau, refine, shift)
    if c != 0.0:
        h = tau / refine
        for _ in range(refine):
            g = commutator_fields(problem, grid, fields, "imaginary", shift).g
            fields += (h * c * tau**2) * g
    if b != 0.0:
        _rk4_imaginary(problem, grid, fields, b, 0.5 * tau, refine, shift)


def nonlinear_flow_real(problem: ProblemSpec, grid: SpectralGrid, state: State,
                        b: float, c: float, tau: float) -> State:
    """Exact pointwise exponential of the potential + nonlinearity stage."""
    if state.mode != "real":
        raise ValueError("nonlinear_flow_real requires a real-time state")
    fields = state.fields.copy()
    _nonlinear_real_inplace(problem, grid, fields, b, c, tau)
    return State(fields, state.t, state.mode)


def nonlinear_flow_imaginary(problem: ProblemSpec, grid: SpectralGrid,
                             state: State, b: float, c: float, tau: float,
                             refine: int = 1, shift=None) -> State:
    """Composite flow of the parabolic potential + nonlinearity stage."""
    if state.mode != "imaginary":
        raise ValueError("nonlinear_flow_imaginary requires an imaginary-time state")
    if refine < 1:
        raise ValueError("refine must be >= 1")
    shift = np.zeros(problem.J) if shift is None else np.asarray(shift, dtype=float)
    fields = state.fields.copy()
    _nonlinear_imag_inplace(problem, grid, fields, b, c, tau, refine, shift)
    return State(fields, state.t, state.mode)


def step(problem: ProblemSpec, grid: SpectralGrid, state: State,
         method: MethodSpec, tau: float, refine: int = 1, shift=None) -> State:
    """One full splitting step; advances the clock by tau in either mode.

    In imaginary time `shift` carries the per-component chemical-potential
    offset of the normalized flow; the kinetic stage never sees it.
    """
    C = MODE_FACTOR[state.mode]
    if state.mode == "imaginary":
        shift = np.zeros(problem.J) if shift is None else np.asarray(shift, dtype=float)
    fields = state.fields.copy()
    for i, (a, b, c) in enumerate(zip(method.a, method.b, method.c)):
        try:
            if a != 0.0:
                for j in range(problem.J):
                    fields[j] = kinetic_flow(grid, fields[j], problem.alpha[j],
                                             C, a * tau)
            if b != 0.0 or c != 0.0:
                if state.mode == "real":
                    _nonlinear_real_inplace(problem, grid, fields, b, c, tau)
                else:
                    _nonlinear_imag_inplace(problem, grid, fields, b, c, tau,
                                            refine, shift)
        except DivergedError as exc:
            exc.stage = i
            exc.t = state.t
            raise
        if not np.all(np.isfinite(fields)):
            raise DivergedError(f"{method.name}: non-finite fields after stage {i}",
                                stage=i, t=state.t)
    return State(fields, state.t + tau, state.mode)

"""Closed-form double-commutator corrections and their finite-difference oracle.

The modified splitting's nonlinear stage integrates b*F2 + c*tau^2*G where

    G(v) = F1''(v) F2(v) F2(v) + F1'(v) F2'(v) F2(v) + F2'(v) F2'(v) F1(v)
           - F2''(v) F1(v) F2(v) - 2 F2'(v) F1'(v) F2(v)

and F1 = kinetic, F2 = potential + nonlinearity, both including the mode
factor (-i for real time, -1 for imaginary time).  The closed forms below
are hand-expanded for 1- and 2-component systems; `commutator_oracle`
evaluates the definition directly via central finite differences on a
zero-padded grid (spectral differentiation of the quintic intermediates is
alias-free once the padded band exceeds five times the field band).

Sign convention: the closed forms are normalized so they agree with the
definition applied to the actual flows.  In the real-time variant that is
G_j = 2i (S0+S1+S2+S3) psi_j; in the imaginary-time variant it is
G_j = -2 (S0+S1+S2+S3), i.e. the parabolic case picks up a global minus
relative to the Schrodinger one ((-1)^3 versus (-i)^3 on the kinetic and
multiplicative parts).  The linear-case matrix identity [B,[B,A]] with
c2 = -1/72 pins this normalization; see tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (ProblemSpec, State, nonlinear_density, potential,
                    potential_gradient, potential_weighted_laplacian)
from .spectral import (MODE_FACTOR, GridSpec, SpectralGrid, build_grid,
                       forward, gradient_from_coef, inverse,
                       laplacian_from_coef)

REAL_FIELD_TOL = 1e-12


@dataclass
class CommutatorOutput:
    """Per-component commutator values; real time also carries the pointwise
    multiplier g_tilde with g[j] = multiplier[j] * psi[j] (same code path,
    so the factorization is exact)."""

    g: np.ndarray
    multiplier: np.ndarray | None = None


@dataclass
class OracleResult:
    g: np.ndarray
    noise_floor: float


class _DerivBundle:
    """Spectral derivatives of one component: one forward transform, the
    gradient and any weighted Laplacians are inverse transforms on demand."""

    def __init__(self, grid: SpectralGrid, fld: np.ndarray, real: bool):
        self._grid = grid
        self._real = real
        self._coef = forward(grid, fld)
        self.partials = [self._maybe_real(gradient_from_coef(grid, self._coef, i))
                         for i in range(grid.d)]
        self._laps: dict = {}

    def _maybe_real(self, arr):
        return arr.real if self._real else arr

    def lap(self, alpha_row) -> np.ndarray:
        key = tuple(float(a) for a in alpha_row)
        if key not in self._laps:
            self._laps[key] = self._maybe_real(
                laplacian_from_coef(self._grid, self._coef, alpha_row))
        return self._laps[key]


def _wdot(weights, pa, pb):
    acc = weights[0] * pa[0] * pb[0]
    for i in range(1, len(pa)):
        acc = acc + weights[i] * pa[i] * pb[i]
    return acc


def _full(grid, arr):
    return np.broadcast_to(arr, grid.shape).copy() if arr.shape != grid.shape else arr


def commutator_fields(problem: ProblemSpec, grid: SpectralGrid,
                      fields: np.ndarray, mode: str,
                      shift=None) -> CommutatorOutput:
    """Closed-form G for raw component fields; flows call this directly.

    `shift` holds per-component constants subtracted from the potentials
    (the chemical-potential offset of the normalized parabolic flow).  A
    constant offset leaves every potential derivative alone, so only the
    undifferentiated V factors of the imaginary-time variant see it; the
    real-time multiplier is shift-free.
    """
    if mode == "real":
        return _commutator_real_fields(problem, grid, fields)
    if mode == "imaginary":
        return _commutator_imaginary_fields(problem, grid, fields, shift)
    raise ValueError(f"unknown mode {mode!r}")


def commutator_real(problem: ProblemSpec, grid: SpectralGrid,
                    state: State) -> CommutatorOutput:
    if state.mode != "real":
        raise ValueError("commutator_real requires a real-time state")
    return _commutator_real_fields(problem, grid, state.fields)


def commutator_imaginary(problem: ProblemSpec, grid: SpectralGrid,
                         state: State) -> CommutatorOutput:
    if state.mode != "imaginary":
        raise ValueError("commutator_imaginary requires an imaginary-time state")
    return _commutator_imaginary_fields(problem, grid, state.fields)


def _commutator_real_fields(problem, grid, fields):
    J = problem.J
    th = problem.theta
    alpha = problem.alpha
    bundles = [_DerivBundle(grid, fields[j], real=False) for j in range(J)]
    dens = [np.abs(fields[j]) ** 2 for j in range(J)]
    gradV = [[potential_gradient(problem, grid, j, i) for i in range(grid.d)]
             for j in range(J)]

    mult = np.empty_like(fields)
    g = np.empty_like(fields)
    for j in range(J):
        k = 1 - j if J == 2 else None
        aj = alpha[j]
        pj = bundles[j].partials
        cpj = [np.conj(p) for p in pj]
        psi_j = fields[j]

        S = _full(grid, sum(aj[i] * gradV[j][i] ** 2 for i in range(grid.d)))

        # potential-curvature and potential-gradient cross terms
        s1 = -th[j, j] * potential_weighted_laplacian(problem, grid, j, aj) * dens[j]
        if k is not None and th[j, k] != 0.0:
            ak = alpha[k]
            psi_k = fields[k]
            pk = bundles[k].partials
            s1 = s1 - th[j, k] * potential_weighted_laplacian(problem, grid, k, ak) * dens[k]
            cross = sum((aj[i] * gradV[j][i] - ak[i] * gradV[k][i])
                        * (pk[i] * np.conj(psi_k)).real for i in range(grid.d))
            s1 = s1 + 2 * th[j, k] * cross
        S = S + 2 * s1

        # gradient-product terms
        s2 = (th[j, j] ** 2 * (_wdot(aj, pj, pj) * np.conj(psi_j) ** 2).real
              + 3 * th[j, j] ** 2 * _wdot(aj, pj, cpj).real * dens[j])
        if k is not None:
            ak = alpha[k]
            psi_k = fields[k]
            pk = bundles[k].partials
            cpk = [np.conj(p) for p in pk]
            tjk, tkj, tkk = th[j, k], th[k, j], th[k, k]
            if tjk != 0.0 and tkj != 0.0:
                s2 = s2 + 2 * tjk * tkj * _wdot(ak, pj, cpj).real * dens[k]
                s2 = s2 + 2 * tjk * tkj * (
                    _wdot(ak, pj, pk) * np.conj(psi_j) * np.conj(psi_k)
                    + _wdot(ak, pj, cpk) * np.conj(psi_j) * psi_k).real
            if tjk != 0.0:
                s2 = s2 - tjk ** 2 * ((_wdot(aj, pk, pk) * np.conj(psi_k) ** 2).real
                                      + _wdot(aj, pk, cpk).real * dens[k])
                if tkk != 0.0:
                    s2 = s2 + 2 * tjk * tkk * (
                        (_wdot(ak, pk, pk) * np.conj(psi_k) ** 2).real
                        + 2 * _wdot(ak, pk, cpk).real * dens[k])
                s2 = s2 + 2 * th[j, j] * tjk * _wdot(aj, pk, cpk).real * dens[j]
        S = S - 2 * s2

        # second-derivative terms
        s3 = th[j, j] ** 2 * (bundles[j].lap(aj) * np.conj(psi_j)).real * dens[j]
        if k is not None:
            ak = alpha[k]
            psi_k = fields[k]
            tjk, tkj, tkk = th[j, k], th[k, j], th[k, k]
            if tjk != 0.0 and tkj != 0.0:
                s3 = s3 + tjk * tkj * (bundles[j].lap(ak) * np.conj(psi_j)).real * dens[k]
            if tjk != 0.0:
                s3 = s3 + th[j, j] * tjk * (bundles[k].lap(aj) * np.conj(psi_k)).real * dens[j]
                if tkk != 0.0:
                    s3 = s3 + tjk * tkk * (bundles[k].lap(ak) * np.conj(psi_k)).real * dens[k]
        S = S - 4 * s3

        mult[j] = 2j * S
        g[j] = mult[j] * psi_j
    return CommutatorOutput(g=g, multiplier=mult)


def _commutator_imaginary_fields(problem, grid, fields, shift=None):
    scale = float(np.max(np.abs(fields))) or 1.0
    if np.iscomplexobj(fields) and \
            float(np.max(np.abs(fields.imag))) > REAL_FIELD_TOL * scale:
        raise ValueError("imaginary-time commutator requires real-valued fields")
    J = problem.J
    th = problem.theta
    alpha = problem.alpha
    shift = np.zeros(J) if shift is None else np.asarray(shift, dtype=float)
    re_fields = np.ascontiguousarray(fields.real)
    bundles = [_DerivBundle(grid, re_fields[j], real=True) for j in range(J)]
    gradV = [[potential_gradient(problem, grid, j, i) for i in range(grid.d)]
             for j in range(J)]

    g = np.empty_like(re_fields)
    for j in range(J):
        k = 1 - j if J == 2 else None
        aj = alpha[j]
        pj = bundles[j].partials
        psi_j = re_fields[j]
        Vj = potential(problem, grid, j) - shift[j]
        tjj = th[j, j]

        S = _full(grid, sum(aj[i] * gradV[j][i] ** 2 for i in range(grid.d))) * psi_j

        # S1: potential-weighted gradient products
        s1 = 6 * tjj * Vj * _wdot(aj, pj, pj) * psi_j
        s1 = s1 + 2 * psi_j * sum(
            aj[i] * gradV[j][i] * 3 * tjj * pj[i] * psi_j for i in range(grid.d))
        s1 = s1 - tjj * potential_weighted_laplacian(problem, grid, j, aj) * psi_j ** 3
        if k is not None and th[j, k] != 0.0:
            ak = alpha[k]
            tjk = th[j, k]
            psi_k = re_fields[k]
            pk = bundles[k].partials
            Vk = potential(problem, grid, k) - shift[k]
            lap_diff_k = bundles[k].lap(aj) - bundles[k].lap(ak)
            s1 = s1 + 2 * tjk * Vk * (2 * _wdot(aj, pj, pk) * psi_k
                                      + _wdot(aj, pk, pk) * psi_j
                                      + lap_diff_k * psi_j * psi_k)
            s1 = s1 + 2 * psi_j * sum(
                aj[i] * gradV[j][i] * 2 * tjk * pk[i] * psi_k for i in range(grid.d))
            s1 = s1 + 2 * tjk * psi_k * (
                sum(aj[i] * gradV[k][i] * pj[i] for i in range(grid.d)) * psi_k
                + 2 * sum((aj[i] - ak[i]) * gradV[k][i] * pk[i] for i in range(grid.d)) * psi_j)
            s1 = s1 + tjk * (potential_weighted_laplacian(problem, grid, k, aj)
                             - 2 * potential_weighted_laplacian(problem, grid, k, ak)
                             ) * psi_j * psi_k ** 2
        S = S + s1

        # S2: pure gradient products
        s2 = 6 * tjj ** 2 * _wdot(aj, pj, pj) * psi_j ** 3
        if k is not None and th[j, k] != 0.0:
            ak = alpha[k]
            tjk, tkj, tkk = th[j, k], th[k, j], th[k, k]
            psi_k = re_fields[k]
            pk = bundles[k].partials
            mix = tjj * tjk + tjk * tkj
            s2 = s2 + 3 * mix * _wdot(aj, pj, pj) * psi_j * psi_k ** 2
            s2 = s2 - 2 * tjk * tkj * _wdot(ak, pj, pj) * psi_j * psi_k ** 2
            s2 = s2 + 4 * tjk * tkk * _wdot(aj, pj, pk) * psi_k ** 3
            s2 = s2 + 6 * mix * _wdot(aj, pj, pk) * psi_j ** 2 * psi_k
            s2 = s2 - 4 * tjk * tkj * _wdot(ak, pj, pk) * psi_j ** 2 * psi_k
            s2 = s2 + (tjk * tkj - tjj * tjk) * _wdot(aj, pk, pk) * psi_j ** 3
            s2 = s2 + 2 * tjk ** 2 * _wdot(aj, pk, pk) * psi_j * psi_k ** 2
            s2 = s2 + 6 * tjk * tkk * (_wdot(aj, pk, pk) - _wdot(ak, pk, pk)) * psi_j * psi_k ** 2
        S = S + 2 * s2

        # S3: Laplacian differences; vanishes when the weights agree
        if k is not None and th[j, k] != 0.0 and not np.array_equal(alpha[j], alpha[k]):
            ak = alpha[k]
            tjk, tkj, tkk = th[j, k], th[k, j], th[k, k]
            psi_k = re_fields[k]
            lap_diff_j = bundles[j].lap(aj) - bundles[j].lap(ak)
            lap_diff_k = bundles[k].lap(aj) - bundles[k].lap(ak)
            s3 = 2 * tjk * tkj * lap_diff_j * psi_j ** 2 * psi_k ** 2
            s3 = s3 - (tjj * tjk - tjk * tkj) * lap_diff_k * psi_j ** 3 * psi_k
            s3 = s3 + 2 * tjk * tkk * lap_diff_k * psi_j * psi_k ** 3
            S = S + 2 * s3

        g[j] = -2.0 * S
    return CommutatorOutput(g=g, multiplier=None)


# --- finite-difference oracle -------------------------------------------------


def _pad_coef(coef: np.ndarray, factor: int) -> np.ndarray:
    """Embed fft-ordered coefficients into a factor-times-finer spectral box."""
    out = coef
    for axis, m in enumerate(coef.shape):
        shape = list(out.shape)
        shape[axis] = factor * m
        big = np.zeros(shape, dtype=complex)
        half = m // 2
        idx_lo = [slice(None)] * len(shape)
        idx_hi = [slice(None)] * len(shape)
        idx_lo[axis] = slice(0, half)
        idx_hi[axis] = slice(shape[axis] - half, shape[axis])
        src_lo = [slice(None)] * len(shape)
        src_hi = [slice(None)] * len(shape)
        src_lo[axis] = slice(0, half)
        src_hi[axis] = slice(m - half, m)
        big[tuple(idx_lo)] = out[tuple(src_lo)]
        big[tuple(idx_hi)] = out[tuple(src_hi)]
        out = big
    return out


def upsample(grid: SpectralGrid, fine: SpectralGrid, fld: np.ndarray) -> np.ndarray:
    factor = fine.shape[0] // grid.shape[0]
    return inverse(fine, _pad_coef(forward(grid, fld), factor))


def _scaled_eps(eps: float, v: np.ndarray, w: np.ndarray) -> float:
    wmax = float(np.max(np.abs(w)))
    if wmax == 0.0:
        return eps
    vmax = float(np.max(np.abs(v))) or 1.0
    return eps * vmax / wmax


def commutator_oracle(problem: ProblemSpec, grid: SpectralGrid, state: State,
                      mode: str | None = None, *, shift=None,
                      pad_factor: int = 4, eps1: float = 1e-6,
                      eps2: float = 1e-3, richardson: bool = False) -> OracleResult:
    """Evaluate the five-term commutator definition by finite differences.

    First derivatives use central differences with relative step eps1,
    second derivatives nested central differences with relative step eps2
    (steps are rescaled per direction to keep the perturbation's relative
    size fixed).  The nonlinearity is exactly cubic, so the nested second
    difference carries no truncation term and eps2 only balances rounding
    noise; the default keeps the floor near 1e-7 relative.  All spectral
    work happens on a pad_factor-times-finer grid so products up to quintic
    degree stay below the Nyquist band.  The reported noise floor is the
    relative change under halving both steps; with `richardson` the two
    evaluations are extrapolated.

    Test-side tool, never in the propagation hot path.
    """
    mode = mode or state.mode
    C = MODE_FACTOR[mode]
    shift = np.zeros(problem.J) if shift is None else np.asarray(shift, dtype=float)
    fine = build_grid(GridSpec(grid.spec.omega,
                               tuple(pad_factor * m for m in grid.spec.points)))
    v = np.stack([upsample(grid, fine, state.fields[j]) for j in range(problem.J)])

    def F1(u):
        out = np.empty_like(u)
        for j in range(problem.J):
            out[j] = C * laplacian_from_coef(fine, forward(fine, u[j]), problem.alpha[j])
        return out

    def F2(u):
        out = np.empty_like(u)
        for j in range(problem.J):
            out[j] = C * (potential(problem, fine, j) - shift[j]
                          + nonlinear_density(problem, u, j)) * u[j]
        return out

    def dF(F, w, e):
        h = _scaled_eps(e, v, w)
        return (F(v + h * w) - F(v - h * w)) / (2 * h)

    def d2F(F, w1, w2, e):
        h1 = _scaled_eps(e, v, w1)
        h2 = _scaled_eps(e, v, w2)
        return (F(v + h1 * w1 + h2 * w2) - F(v + h1 * w1 - h2 * w2)
                - F(v - h1 * w1 + h2 * w2) + F(v - h1 * w1 - h2 * w2)) / (4 * h1 * h2)

    def evaluate(e1, e2):
        f1 = F1(v)
        f2 = F2(v)
        total = d2F(F1, f2, f2, e2)
        total += dF(F1, dF(F2, f2, e1), e1)
        total += dF(F2, dF(F2, f1, e1), e1)
        total -= d2F(F2, f1, f2, e2)
        total -= 2 * dF(F2, F1(f2), e1)
        return total

    g_fine = evaluate(eps1, eps2)
    g_half = evaluate(eps1 / 2, eps2 / 2)
    ref = float(np.max(np.abs(g_fine))) or 1.0
    noise = float(np.max(np.abs(g_fine - g_half))) / ref
    if richardson:
        g_fine = (4 * g_half - g_fine) / 3
    sl = tuple([slice(None)] + [slice(None, None, pad_factor)] * grid.d)
    return OracleResult(g=np.ascontiguousarray(g_fine[sl]), noise_floor=noise)

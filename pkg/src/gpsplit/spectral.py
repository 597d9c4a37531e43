"""Fourier pseudospectral grids, transforms, derivatives, and exact kinetic flows.

The periodic box is the tensor product of intervals [-omega_i, omega_i) with
M_i equidistant points per axis (right endpoint excluded).  Forward transforms
are scaled so that the coefficient-space Euclidean norm equals the discrete
L2 norm (Parseval); with that convention a coefficient value is independent
of the grid resolution, which the commutator oracle exploits for alias-free
padding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FlowOverflowError

# exp() of a larger real part overflows float64
MAX_EXP_REAL = 700.0

# multiplier of the time derivative in each evolution mode:
# real time      d/dt psi = -i H(psi)
# imaginary time d/dt psi = -  H(psi)
MODE_FACTOR = {"real": -1.0j, "imaginary": -1.0}


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Box half-widths and mode counts, one entry per axis."""

    omega: tuple[float, ...]
    points: tuple[int, ...]

    def __post_init__(self):
        omega = tuple(float(w) for w in np.atleast_1d(self.omega))
        points = tuple(int(m) for m in np.atleast_1d(self.points))
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "points", points)
        if not 1 <= len(omega) <= 3:
            raise ValueError(f"dimension must be 1, 2 or 3, got {len(omega)}")
        if len(points) != len(omega):
            raise ValueError("omega and points must have the same length")
        for w in omega:
            if not w > 0:
                raise ValueError(f"half-width must be positive, got {w}")
        for m in points:
            if m <= 0 or m % 2:
                raise ValueError(f"mode count must be even and positive, got {m}")
        if float(np.prod(points)) > 2**31:
            raise ValueError("grid too large to address")

    @property
    def d(self) -> int:
        return len(self.omega)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(2 * w / m for w, m in zip(self.omega, self.points))


@dataclass
class TransformCounter:
    """Running tally of FFT work, the solver's effort metric."""

    forward: int = 0
    inverse: int = 0

    @property
    def total(self) -> int:
        return self.forward + self.inverse

    def snapshot(self) -> int:
        return self.total


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Grid with precomputed coordinates and derivative eigenvalue tables.

    Eigenvalue tables are stored in the transform engine's native index
    order (numpy fft layout), covering the symmetric mode range
    m in {-M/2, ..., M/2 - 1} per axis:

        deriv_eigs[i][m] = i*pi*m/omega_i      (first derivative)
        lap_eigs[i][m]   = -(pi*m/omega_i)**2  (second derivative)

    Immutable after construction; the embedded counter only tallies work.
    """

    spec: GridSpec
    coords: tuple[np.ndarray, ...]
    deriv_eigs: tuple[np.ndarray, ...]
    lap_eigs: tuple[np.ndarray, ...]
    counter: TransformCounter = field(default_factory=TransformCounter)
    _symbol_cache: dict = field(default_factory=dict, repr=False)

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def shape(self) -> tuple[int, ...]:
        return self.spec.points

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spec.spacing))

    def axis_view(self, arr: np.ndarray, axis: int) -> np.ndarray:
        """Reshape a per-axis table so it broadcasts over the full grid."""
        shape = [1] * self.d
        shape[axis] = arr.shape[0]
        return arr.reshape(shape)

    def coord(self, axis: int) -> np.ndarray:
        return self.axis_view(self.coords[axis], axis)

    def weighted_lap_symbol(self, alpha_row) -> np.ndarray:
        """Full-grid table of sum_i alpha_i * lap_eigs_i, cached per weights."""
        key = tuple(float(a) for a in alpha_row)
        table = self._symbol_cache.get(key)
        if table is None:
            table = np.zeros(self.shape)
            for i, a in enumerate(key):
                table = table + a * self.axis_view(self.lap_eigs[i], i)
            self._symbol_cache[key] = table
        return table


def build_grid(spec: GridSpec) -> SpectralGrid:
    coords = []
    deriv = []
    lap = []
    for w, m in zip(spec.omega, spec.points):
        h = 2 * w / m
        coords.append(-w + h * np.arange(m))
        modes = np.fft.fftfreq(m, d=1.0 / m)  # integers in fft order
        mu = 1j * np.pi * modes / w
        deriv.append(mu)
        lap.append(-((np.pi * modes / w) ** 2))
    return SpectralGrid(spec, tuple(coords), tuple(deriv), tuple(lap))


def _coef_scale(grid: SpectralGrid) -> float:
    # maps raw fftn output onto Parseval-normalized coefficients
    return float(
        np.prod([np.sqrt(2 * w) / m for w, m in zip(grid.spec.omega, grid.spec.points)])
    )


def forward(grid: SpectralGrid, fld: np.ndarray) -> np.ndarray:
    """Physical samples -> Parseval-normalized Fourier coefficients."""
    if fld.shape != grid.shape:
        raise ValueError(f"field shape {fld.shape} != grid shape {grid.shape}")
    grid.counter.forward += 1
    return np.fft.fftn(fld) * _coef_scale(grid)


def inverse(grid: SpectralGrid, coef: np.ndarray) -> np.ndarray:
    """Parseval-normalized coefficients -> physical samples."""
    if coef.shape != grid.shape:
        raise ValueError(f"coefficient shape {coef.shape} != grid shape {grid.shape}")
    grid.counter.inverse += 1
    return np.fft.ifftn(coef) / _coef_scale(grid)


def transform(grid: SpectralGrid, fld: np.ndarray, direction: str) -> np.ndarray:
    if direction == "forward":
        return forward(grid, fld)
    if direction == "inverse":
        return inverse(grid, fld)
    raise ValueError(f"unknown transform direction {direction!r}")


def gradient_from_coef(grid: SpectralGrid, coef: np.ndarray, axis: int,
                       weight: float = 1.0) -> np.ndarray:
    """Inverse transform of mu_axis * coef; `weight` scales the result."""
    if not 0 <= axis < grid.d:
        raise ValueError(f"axis {axis} out of range for d={grid.d}")
    out = inverse(grid, coef * grid.axis_view(grid.deriv_eigs[axis], axis))
    if weight != 1.0:
        out *= weight
    return out


def spectral_gradient(grid: SpectralGrid, fld: np.ndarray, axis: int,
                      weight: float = 1.0) -> np.ndarray:
    """weight * d/dx_axis of a grid field, by coefficient multiplication."""
    return gradient_from_coef(grid, forward(grid, fld), axis, weight)


def laplacian_from_coef(grid: SpectralGrid, coef: np.ndarray, alpha_row) -> np.ndarray:
    """Inverse transform of (sum_i alpha_i lap_eigs_i) * coef."""
    return inverse(grid, coef * grid.weighted_lap_symbol(alpha_row))


def kinetic_flow(grid: SpectralGrid, fld: np.ndarray, alpha_row, C: complex,
                 tau: float) -> np.ndarray:
    """Exact flow of d/dt u = C * Delta_alpha u over time tau.

    Multiplies each coefficient by exp(C * tau * lambda_alpha_m).  Raises
    FlowOverflowError when any exponent's real part exceeds the float64
    range, which is how anti-diffusive stages (negative coefficients in
    imaginary time) announce themselves.
    """
    if tau == 0.0:
        return fld.copy()
    lam = grid.weighted_lap_symbol(alpha_row)
    exponent = (C * tau) * lam
    max_re = float(np.max(exponent.real)) if np.iscomplexobj(exponent) else float(np.max(exponent))
    if max_re > MAX_EXP_REAL:
        raise FlowOverflowError(
            f"kinetic flow exponent real part {max_re:.1f} exceeds {MAX_EXP_REAL}")
    return inverse(grid, forward(grid, fld) * np.exp(exponent))


def discrete_inner(grid: SpectralGrid, a: np.ndarray, b: np.ndarray) -> complex:
    """Periodic quadrature inner product <a, b> = prod(h) * sum a * conj(b).

    Accepts single fields or stacks of per-component fields; stacks are
    summed over components.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return grid.cell_volume * complex(np.vdot(b, a))


def discrete_norm(grid: SpectralGrid, a: np.ndarray) -> float:
    """sqrt(<a, a>) with the same quadrature weight, over all components."""
    return float(np.sqrt(grid.cell_volume) * np.linalg.norm(a.ravel()))

"""Diagnostics CSV stream and binary state snapshots.

Diagnostics rows carry 17 significant digits so a write/read round trip is
bit-exact for float64.  Snapshots store complex128 little-endian values,
component-major with axis 0 varying fastest, behind a fixed self-describing
header.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import SnapshotError
from .model import ObservableRecord, State
from .spectral import GridSpec, SpectralGrid

SNAPSHOT_MAGIC = b"GPSS"
SNAPSHOT_VERSION = 1
_MODE_TAG = {"real": 0, "imaginary": 1}
_TAG_MODE = {v: k for k, v in _MODE_TAG.items()}
_ENCODING_C16 = 0
_FIXED_HEADER = struct.Struct("<4sIIIBB2xd")


def diagnostics_header(J: int) -> list[str]:
    cols = ["step", "t", "tau", "accepted", "err_est", "mass_total"]
    cols += [f"mass_{j + 1}" for j in range(J)]
    cols += ["E", "E1", "E2"]
    cols += [f"mu_{j + 1}" for j in range(J)]
    cols += ["transforms_cum"]
    return cols


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_diagnostics(path, records, J: int) -> None:
    """Write an ObservableRecord stream as CSV in acceptance order."""
    path = Path(path)
    lines = [",".join(diagnostics_header(J))]
    for rec in records:
        if len(rec.mass) != J:
            raise ValueError(f"record has {len(rec.mass)} components, expected {J}")
        row = [str(int(rec.step)), _fmt(rec.t), _fmt(rec.tau), str(int(rec.accepted)),
               _fmt(rec.err_estimate), _fmt(rec.mass_total)]
        row += [_fmt(m) for m in rec.mass]
        row += [_fmt(rec.E), _fmt(rec.E1), _fmt(rec.E2)]
        row += [_fmt(m) for m in rec.mu]
        row += [str(int(rec.transforms_cum))]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def read_diagnostics(path) -> list[ObservableRecord]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise SnapshotError(f"{path}: empty diagnostics file")
    header = lines[0].split(",")
    J = sum(1 for c in header if c.startswith("mass_") and c != "mass_total")
    if header != diagnostics_header(J):
        raise SnapshotError(f"{path}: unexpected diagnostics header")
    records = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(header):
            raise SnapshotError(f"{path}: ragged row: {line!r}")
        it = iter(parts)
        step = int(next(it))
        t = float(next(it))
        tau = float(next(it))
        accepted = bool(int(next(it)))
        err = float(next(it))
        mass_total = float(next(it))
        mass = tuple(float(next(it)) for _ in range(J))
        E = float(next(it))
        E1 = float(next(it))
        E2 = float(next(it))
        mu = tuple(float(next(it)) for _ in range(J))
        transforms = int(next(it))
        records.append(ObservableRecord(
            t=t, tau=tau, mass=mass, mass_total=mass_total, E1=E1, E2=E2, E=E,
            mu=mu, err_estimate=err, accepted=accepted, step=step,
            transforms_cum=transforms))
    return records


def snapshot_write(state: State, grid: SpectralGrid, path) -> None:
    spec = grid.spec
    path = Path(path)
    with path.open("wb") as f:
        f.write(_FIXED_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, spec.d,
                                   state.J, _MODE_TAG[state.mode], _ENCODING_C16,
                                   state.t))
        f.write(struct.pack(f"<{spec.d}I", *spec.points))
        f.write(struct.pack(f"<{spec.d}d", *spec.omega))
        for j in range(state.J):
            f.write(np.ravel(state.fields[j], order="F").astype("<c16").tobytes())


def snapshot_read(path, expected_grid: SpectralGrid | None = None) -> tuple[State, GridSpec]:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _FIXED_HEADER.size:
        raise SnapshotError(f"{path}: truncated header")
    magic, version, d, J, mode_tag, enc, t = _FIXED_HEADER.unpack_from(blob, 0)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"{path}: unsupported version {version}")
    if enc != _ENCODING_C16:
        raise SnapshotError(f"{path}: unknown field encoding {enc}")
    if mode_tag not in _TAG_MODE:
        raise SnapshotError(f"{path}: unknown mode tag {mode_tag}")
    offset = _FIXED_HEADER.size
    try:
        points = struct.unpack_from(f"<{d}I", blob, offset)
        offset += 4 * d
        omega = struct.unpack_from(f"<{d}d", blob, offset)
        offset += 8 * d
    except struct.error as exc:
        raise SnapshotError(f"{path}: truncated grid block: {exc}") from None
    spec = GridSpec(omega, points)
    n = int(np.prod(points))
    expected = offset + J * n * 16
    if len(blob) != expected:
        raise SnapshotError(
            f"{path}: payload is {len(blob) - offset} bytes, expected {expected - offset}")
    if expected_grid is not None and (expected_grid.spec.points != spec.points
                                      or expected_grid.spec.omega != spec.omega):
        raise SnapshotError(
            f"{path}: grid {spec.points}/{spec.omega} does not match "
            f"{expected_grid.spec.points}/{expected_grid.spec.omega}")
    flat = np.frombuffer(blob, dtype="<c16", offset=offset)
    fields = np.stack([flat[j * n:(j + 1) * n].reshape(points, order="F")
                       for j in range(J)])
    return State(fields, t=t, mode=_TAG_MODE[mode_tag]), spec


def snapshot_size(d: int, J: int, points) -> int:
    """Exact on-disk size in bytes for a given geometry."""
    return _FIXED_HEADER.size + 12 * d + J * int(np.prod(points)) * 16

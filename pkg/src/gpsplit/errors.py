"""Shared exception types."""


class GpsplitError(Exception):
    """Base class for solver errors."""


class DivergedError(GpsplitError):
    """A trajectory left the finite / bounded-mass regime.

    Carries enough context to report which stage of which step failed.
    """

    def __init__(self, message, *, stage=None, step_index=None, t=None):
        super().__init__(message)
        self.stage = stage
        self.step_index = step_index
        self.t = t


class FlowOverflowError(DivergedError):
    """A subflow exponent would overflow double precision."""


class ControllerFailureError(GpsplitError):
    """The adaptive step controller cannot make progress."""


class ConfigError(GpsplitError):
    """Invalid run configuration; message carries the field path."""

class SnapshotError(GpsplitError):
    """Corrupt, truncated, or mismatched snapshot file."""

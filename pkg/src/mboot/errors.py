"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MbootError(Exception):
    """Base class for all package errors."""


class InvalidModelError(MbootError, ValueError):
    """Raised when a model or dataset violates its domain constraints."""


class UnsupportedOperationError(MbootError):
    """Raised for operations a family cannot provide (e.g. Hessian of a non-smooth loss)."""


class NonConvergenceError(MbootError):
    """Raised when Newton iteration fails to reach the gradient tolerance."""

    def __init__(self, message: str, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DegenerateDrawError(MbootError):
    """A weighted likelihood with no bounded maximizer; the caller resamples."""


class PathologicalSampleError(MbootError):
    """Too many degenerate bootstrap draws on one dataset."""


class SingularInformationError(MbootError):
    """Raised when an information-type matrix is (numerically) singular."""


class ExperimentAborted(MbootError):
    """Raised when too many replications of an experiment fail; carries the partial report."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report

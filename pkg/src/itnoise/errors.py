"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`ITNError`,
so callers (notably the CLI) can map families of failures onto exit codes.
"""


class ITNError(Exception):
    """Base class for all package errors."""


class DomainError(ITNError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(ITNError, ValueError):
    """A run or simulation configuration is invalid."""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class ConventionMismatchError(ITNError, ValueError):
    """Arithmetic between spectra carrying different normalization tags."""


class SingularPointError(DomainError):
    """A grid point hits a pole of an analytic expression."""

    def __init__(self, message, index):
        self.index = index
        super().__init__(f"{message} (grid index {index})")


class TailCoverageError(ITNError, ValueError):
    """A frequency grid is too narrow for the requested convolution."""

    def __init__(self, message, truncation_bound):
        self.truncation_bound = truncation_bound
        super().__init__(f"{message}; estimated truncation bound {truncation_bound:.3e}")


class InconclusivePeakError(ITNError, ValueError):
    """Peak diagnostics could not locate an interior maximum."""


class ConvergenceError(ITNError, RuntimeError):
    """Numerical quadrature did not reach the requested tolerance.

    ``worst_intervals`` lists ``(a, b, error)`` triples, largest error first.
    """

    def __init__(self, message, worst_intervals=()):
        self.worst_intervals = list(worst_intervals)
        super().__init__(message)


class InsufficientSamplesError(ITNError, RuntimeError):
    """A Monte Carlo estimate is too noisy to be reported."""

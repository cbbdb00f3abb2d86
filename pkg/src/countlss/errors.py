"""Exception types raised across the package."""


class CountlssError(Exception):
    """Base class for all package errors."""


class DomainError(CountlssError, ValueError):
    """A parameter or link argument lies outside its admissible domain."""


class NumericalError(CountlssError, ArithmeticError):
    """A computation produced a non-finite value."""


class ConvergenceError(CountlssError, RuntimeError):
    """An iterative solver hit its iteration limit.

    The best iterate found so far is kept on ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateError(CountlssError, ValueError):
    """Input data carry no usable variation (e.g. an all-zero design)."""


class DegenerateSeriesError(DegenerateError):
    """A time series is constant, so correlation statistics are undefined."""


class FormatError(CountlssError, ValueError):
    """An input file does not follow the expected layout."""


class RangeError(CountlssError, IndexError):
    """An index, window or count argument is out of range."""


class EmptyClusterError(CountlssError, ValueError):
    """A cluster passed to the feature builder has no items."""


class MissingArtifactError(CountlssError, FileNotFoundError):
    """A pipeline stage needs the output of an earlier stage that is absent."""

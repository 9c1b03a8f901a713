"""Exception hierarchy shared by every module."""


class TorusLyapError(Exception):
    """Base class for all package errors."""


class ValidationError(TorusLyapError, ValueError):
    """Bad input: wrong dimension, malformed system file, out-of-range degree."""


class NumericError(TorusLyapError, ArithmeticError):
    """A computation produced non-finite values.

    ``step`` records the iterate at which the problem was detected, when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class ReorthonormalizationError(NumericError):
    """A QR step produced a non-positive diagonal entry."""


class DegenerateSplittingError(TorusLyapError):
    """Exponents cannot be grouped into well-separated Oseledec blocks."""

    def __init__(self, message, exponents=()):
        super().__init__(message)
        self.exponents = tuple(exponents)


class MetricDivergenceError(NumericError):
    """The Lyapunov-metric series did not show geometric decay."""

    def __init__(self, message, block=None, step=None):
        super().__init__(message, step)
        self.block = block


class ConsistencyError(TorusLyapError):
    """Two routes to the same quantity disagree beyond round-off."""

"""Exception hierarchy shared by every nlslab module.

The CLI maps ``ValidationError`` subclasses to exit code 2 and
``NumericalError`` subclasses to exit code 3.
"""

from __future__ import annotations


class NLSLabError(Exception):
    """Base class for all nlslab errors."""


class ValidationError(NLSLabError, ValueError):
    """Bad input: wrong shape, wrong dimension, invalid parameters."""


class NumericalError(NLSLabError, ArithmeticError):
    """A computation failed numerically (divergence, non-convergence, NaN)."""


class GridMismatchError(ValidationError):
    pass


class DimensionError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class InsufficientDataError(ValidationError):
    pass


class NotApplicableError(ValidationError):
    """Operation requested on data it does not apply to (e.g. a non-focusing series)."""


class DomainError(ValidationError):
    pass


class SnapshotFormatError(ValidationError):
    pass


class ResolutionError(NumericalError):
    """Result would not be resolved on the grid (spectral or spatial tail too large)."""


class ResolutionWarning(UserWarning):
    """Result is usable but carries tail mass near the box edge."""


class ConvergenceError(NumericalError):
    def __init__(self, message: str, last_residual: float, iterations: int):
        super().__init__(f"{message} (residual={last_residual:.3e} after {iterations} iterations)")
        self.last_residual = last_residual
        self.iterations = iterations


class NumericalBlowupError(NumericalError):
    pass

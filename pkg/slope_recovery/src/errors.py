"""Exception hierarchy for the SLOPE recovery toolkit."""

from typing import Optional

import numpy as np


class SlopeError(Exception):
    """Base class for every error raised by this package."""


class InvalidMatrix(SlopeError, ValueError):
    pass


class DimensionError(SlopeError, ValueError):
    pass


class DomainError(SlopeError, ValueError):
    pass


class InvalidCovariance(SlopeError, ValueError):
    pass


class InvalidVector(SlopeError, ValueError):
    pass


class EmptyPattern(SlopeError, ValueError):
    pass


class InvalidClusterValues(SlopeError, ValueError):
    pass


class InvalidTuning(SlopeError, ValueError):
    pass


class InvalidDesign(SlopeError, ValueError):
    pass


class InvalidConfig(SlopeError, ValueError):
    pass


class NotConverged(SlopeError, RuntimeError):
    """Solver hit max_iter before the KKT test passed."""

    def __init__(
        self,
        message: str,
        last_iterate: Optional[np.ndarray] = None,
        kkt_residual: float = float("nan"),
        iterations: int = 0,
    ):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.kkt_residual = kkt_residual
        self.iterations = iterations


class CalibrationFailed(SlopeError, RuntimeError):
    """The target probability lies above what any alpha achieves."""

    def __init__(self, message: str, ceiling: float = float("nan")):
        super().__init__(message)
        self.ceiling = ceiling

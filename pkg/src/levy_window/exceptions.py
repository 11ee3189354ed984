"""Exception hierarchy shared by all modules."""


class LevyWindowError(Exception):
    """Base class for errors raised by this package."""


class DomainError(LevyWindowError, ValueError):
    """A parameter lies outside the admissible domain."""


class MomentDivergenceError(DomainError):
    """A requested moment order is not below the tail index."""


class QuadratureError(LevyWindowError, ArithmeticError):
    """Numerical integration failed to reach the requested tolerance."""


class DataError(LevyWindowError, ValueError):
    """Input series is malformed (bad rows, gaps, unequal spacing)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateScaleError(DataError):
    """Returns at some horizon have zero dispersion."""


class EstimationError(LevyWindowError):
    """The estimation pipeline cannot produce an estimate."""


class NotALevyWindowError(EstimationError):
    """Central masses do not decay with horizon."""


class FitInfeasibleError(EstimationError):
    """Too few grid points for the requested segment fit."""

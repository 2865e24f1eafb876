"""Exception hierarchy shared by the estimation, inference and simulation layers."""

from __future__ import annotations


class HdpelError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HdpelError, ValueError):
    """Invalid model or run configuration."""


class DataError(HdpelError, ValueError):
    """Malformed or missing input data."""


class InsufficientDataError(DataError):
    """Sample too short for the requested model."""


class NumericalEvaluationError(HdpelError, ArithmeticError):
    """A moment function returned a non-finite value."""

    def __init__(self, message: str, t: int | None = None):
        super().__init__(message)
        self.t = t


class SolverError(HdpelError, RuntimeError):
    """An optimization routine failed."""


class UnboundedDualError(SolverError):
    """The unpenalized dual has no finite maximizer."""


class ConvergenceError(SolverError):
    """Iteration cap reached or a nested solve failed; carries context."""

    def __init__(self, message: str, iteration: int | None = None, last_theta=None):
        super().__init__(message)
        self.iteration = iteration
        self.last_theta = last_theta


class InfeasibleProjectionError(SolverError):
    """Sup-norm projection program is infeasible for the given tolerance."""

    def __init__(self, message: str, min_varsigma: float):
        super().__init__(message)
        self.min_varsigma = min_varsigma


class UndefinedRowError(HdpelError, ArithmeticError):
    """Variance decomposition row with zero forecast-error variance."""

    def __init__(self, message: str, row: int):
        super().__init__(message)
        self.row = row


class UnstableSystemError(SolverError):
    """Coefficient matrix with spectral radius at or above one."""

    def __init__(self, message: str, spectral_radius: float):
        super().__init__(message)
        self.spectral_radius = spectral_radius

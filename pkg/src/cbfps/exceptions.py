"""Exception hierarchy shared across the package.

DataError maps to CLI exit code 2, ConvergenceError (and subclasses) to 3.
"""


class CbfpsError(Exception):
    """Base class for all package errors."""


class DataError(CbfpsError, ValueError):
    """Invalid, malformed or dimensionally inconsistent input data."""


class InsufficientDataError(DataError):
    """Too few observations for the requested operation."""


class SingularMatrixError(DataError):
    """A matrix that must be invertible is singular or near-singular."""


class ConvergenceError(CbfpsError, RuntimeError):
    """An iterative solver failed to reach its tolerance.

    Carries the best residual norm reached so callers can report it.
    """

    def __init__(self, message: str, residual: float | None = None):
        if residual is not None:
            message = f"{message} (best residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class InfeasibleThetaError(ConvergenceError):
    """The inner dual problem has no solution at one relaxation point."""


class InfeasibleProblemError(ConvergenceError):
    """Every relaxation grid point was infeasible."""


class BootstrapError(ConvergenceError):
    """Too many bootstrap replicates failed to produce an estimate."""

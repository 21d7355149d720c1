"""Exception types shared across the package."""


class DtircError(Exception):
    """Base class for all package errors."""


class DimensionError(DtircError, ValueError):
    """Matrix shapes are inconsistent."""


class UnitEigenvalueError(DtircError, ValueError):
    """I - A is singular, so the DC gain is undefined."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class PoleEvaluationError(DtircError, ValueError):
    """A transfer matrix was evaluated at (or numerically at) a pole."""


class DefinitenessError(DtircError, ValueError):
    """A matrix failed a required symmetry or definiteness check."""


class AssumptionError(DtircError, ValueError):
    """A stability or NI hypothesis does not hold for the given data."""


class FormatError(DtircError, ValueError):
    """A model or parameter file could not be parsed."""

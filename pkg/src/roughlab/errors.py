"""Exception hierarchy shared by every module."""


class RoughlabError(Exception):
    """Base class for all package errors."""


class DomainError(RoughlabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ResolutionError(RoughlabError):
    """The requested discretization cannot be supported or did not converge."""


class StructuralError(RoughlabError, ValueError):
    """Objects built on different domains or bases were mixed."""


class AdmissibilityError(RoughlabError, ValueError):
    """Coefficients violate the structural hypotheses of a nonlinearity family."""


class ConsistencyError(RoughlabError):
    """A user-supplied nonlinearity contradicts its own certificates."""


class BlowUpError(RoughlabError, FloatingPointError):
    """An integration produced a non-finite state."""

    def __init__(self, message, last_time):
        super().__init__(message)
        self.last_time = last_time


class SchemeError(RoughlabError, ValueError):
    """A mollification scheme is not applicable to the given data."""


class InsufficientDataError(RoughlabError, ValueError):
    """Too few stored samples for the requested fit or quadrature."""


class RefusalError(RoughlabError):
    """A study refused to continue; the failing report is attached."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


class ResolutionWarning(UserWarning):
    """Quadrature asymmetry or similar resolution symptoms."""

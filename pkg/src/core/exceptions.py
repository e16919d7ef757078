from typing import Any, Optional


class CasimirError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(CasimirError):
    """Invalid run configuration: flags, units, geometry or missing files."""


class DomainError(CasimirError, ValueError):
    """An argument lies outside the domain of the function (e.g. omega <= 0)."""


class OpticalDataError(CasimirError):
    """Optical table could not be parsed or validated."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(CasimirError):
    """Quadrature failed to reach its tolerance within budget."""

    def __init__(self, message: str, best_estimate: Optional[float] = None, error_bound: Optional[float] = None,
                 partial: Any = None):
        self.best_estimate = best_estimate
        self.error_bound = error_bound
        # unconverged result object (e.g. a ForceResult) when the caller can still use it
        self.partial = partial
        super().__init__(message)


class FitError(CasimirError):
    """Hamaker fit preconditions are not met."""

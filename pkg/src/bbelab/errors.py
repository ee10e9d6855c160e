"""Exception hierarchy used across the package."""


class BbeError(Exception):
    """Base class for all package errors."""


class ConfigError(BbeError, ValueError):
    """Invalid configuration or parameter value."""


class ValidationError(BbeError, ValueError):
    """Input violates a documented precondition."""


class GridMismatchError(ValidationError):
    """Data tabulated on one grid was used with another."""


class CondensationError(BbeError):
    """Conserved quantities admit no equilibrium with lambda > 0."""


class NumericalError(BbeError):
    """NaN/Inf, positivity loss or an internal overflow guard."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class SolverStagnationError(BbeError):
    """Iterative solver stopped making progress."""

    def __init__(self, message, spectral_gap=None, residual=None):
        super().__init__(message)
        self.spectral_gap = spectral_gap
        self.residual = residual

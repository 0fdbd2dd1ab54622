"""Exception hierarchy; the CLI maps these onto exit codes."""

from __future__ import annotations


class SchroError(Exception):
    """Base class for every error raised by the package."""

    exit_code: int = 2


class ValidationError(SchroError):
    """Raised when an input violates a precondition."""

    exit_code = 1


class ConfigError(ValidationError):
    """Raised when an experiment config fails schema validation."""


class NumericalError(SchroError):
    """Raised when a numerical stage fails."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class ConvergenceError(NumericalError):
    """Raised when an iteration limit is reached before the tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message, residual=residual)
        self.iterations = iterations

"""Exception hierarchy shared by every stage.

The CLI maps each family onto a process exit code.
"""


class CreditAleError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(CreditAleError, ValueError):
    exit_code = 1


class DataError(CreditAleError, ValueError):
    exit_code = 2


class NumericalError(CreditAleError, ArithmeticError):
    exit_code = 3


class SeparationError(NumericalError):
    """Perfect separation detected while ridge fallback is disabled."""


class ConvergenceError(NumericalError):
    pass


class DivergenceError(NumericalError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"non-finite training loss at epoch {epoch}")

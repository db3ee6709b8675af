from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from app.integrate import IntegrationResult


class ShannonToolkitError(Exception):
    """Base class for every error raised by the toolkit."""


class DomainError(ShannonToolkitError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DimensionMismatchError(DomainError):
    pass


class DegenerateFunctionError(DomainError):
    pass


class DivergentMomentError(DomainError):
    """The requested moment of a test function is infinite."""


class ConfigurationError(ShannonToolkitError, ValueError):
    pass


class IntegrandError(ShannonToolkitError):
    pass


class BudgetExceededError(ShannonToolkitError):
    def __init__(self, message: str, partial: "IntegrationResult") -> None:
        super().__init__(message)
        self.partial = partial

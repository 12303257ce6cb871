"""Exception hierarchy shared by the solver pipeline."""

from __future__ import annotations

from typing import Any


class PriceMfgError(Exception):
    """Base class for all package errors."""


class DomainError(PriceMfgError, ValueError):
    """An argument lies outside the domain of the evaluated function."""


class DegeneratePointError(DomainError):
    """A derivative of the perspective integrand was requested at y <= 0."""


class SupplyIntegrationError(PriceMfgError, RuntimeError):
    """The average-supply callable returned a non-finite value."""

    def __init__(self, message: str, diagnostics: dict[str, Any]):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConstraintAssemblyError(PriceMfgError):
    """The discrete admissible set cannot be assembled consistently."""


class InfeasibleConstraintsError(PriceMfgError):
    """No feasible point could be built for the equality rows."""


class RiccatiEscapeError(PriceMfgError, ArithmeticError):
    """The quadratic coefficient blew up during backward integration."""

    def __init__(self, message: str, escape_time: float):
        super().__init__(message)
        self.escape_time = escape_time


class CharacteristicsCrossingError(PriceMfgError):
    """Characteristics lost monotonicity in the seed variable."""


class GridMismatchError(PriceMfgError, ValueError):
    """Two fields that must share a grid do not."""


class ConfigError(PriceMfgError, ValueError):
    """A run configuration failed validation."""

    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics

"""Semantic exceptions shared across the package."""


class FlgiError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FlgiError, ValueError):
    """An input violates a constructor or operation contract."""


class TableLookupError(FlgiError, LookupError):
    """A (successes, failures) pair falls outside the tabulated index range."""

    def __init__(self, successes: int, failures: int, max_count: int):
        self.successes = successes
        self.failures = failures
        self.max_count = max_count
        super().__init__(
            f"Gittins index not tabulated for (s={successes}, f={failures}); "
            f"table covers 1 <= s, f and s + f <= {max_count}"
        )


class ResourceBudgetError(FlgiError, RuntimeError):
    """An exact enumeration would exceed its node/state budget."""


class DegenerateDistributionError(FlgiError, ArithmeticError):
    """The normal-approximation denominator vanished; the allocation
    probability is concentrated at a single point (mu_y / mu_x)."""

    def __init__(self, point: float):
        self.point = point
        super().__init__(
            f"allocation-probability distribution is degenerate at {point!r}"
        )


class DomainError(FlgiError, ValueError):
    """A state transition refers to a predecessor outside the valid lattice."""


class ContractError(FlgiError, ValueError):
    """Two objects that must share a configuration disagree."""

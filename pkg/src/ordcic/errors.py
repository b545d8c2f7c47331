"""Exception taxonomy shared by the library and the CLI.

Every error carries a machine-readable ``category`` so the CLI can map
failures to exit codes and prefix messages consistently.
"""


class OrdCicError(Exception):
    """Base class for all package errors."""

    category = "internal"


class InputError(OrdCicError):
    """Malformed or inconsistent input data."""

    category = "input"


class ConfigError(OrdCicError):
    """Invalid configuration or option combination."""

    category = "config"


class DomainError(OrdCicError):
    """Argument outside the mathematically admissible range."""

    category = "domain"


class ConvergenceError(OrdCicError):
    """Optimizer failed to converge within the multi-start budget.

    Carries the best candidate found so far in ``best`` when available.
    """

    category = "convergence"

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InfeasibleAlphaError(OrdCicError):
    """The sensitivity parameter alpha lies below the binding feasibility ratio."""

    category = "infeasible-alpha"

    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class DegenerateCellError(InputError):
    """A cell violates the non-degeneracy condition needed by the bounds."""

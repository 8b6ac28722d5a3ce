"""Exception hierarchy shared by the package and mapped to CLI exit codes."""


class ChebDPError(Exception):
    """Base class for all package errors."""


class DomainError(ChebDPError, ValueError):
    """Input lies outside [-1, 1]^d or is otherwise malformed."""


class CapExceededError(ChebDPError):
    """A grid, moment or quadrature size exceeds its configured cap."""


class BudgetError(ChebDPError, ValueError):
    """Invalid privacy parameters."""


class SolverError(ChebDPError):
    """The moment-matching solver produced an unusable iterate."""


class InfeasibleError(ChebDPError, ValueError):
    """Requested construction cannot be built with the given sizes."""


class IngestError(ChebDPError, ValueError):
    """A data file could not be parsed into a dataset."""

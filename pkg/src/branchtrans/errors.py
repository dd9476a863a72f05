"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes, so every failure mode that a user can
trigger from an instance file should surface as one of these classes.
"""


class BranchTransError(Exception):
    """Base class for all package errors."""


class PreconditionError(BranchTransError, ValueError):
    """An input violates a documented precondition."""


class DomainError(PreconditionError):
    """A point lies outside the domain box, or an input is degenerate."""


class EmptyMeasureError(PreconditionError):
    """A measure would have no atoms left after dropping zero masses."""


class BalanceError(PreconditionError):
    """Source and target total masses differ."""


class ThresholdError(PreconditionError):
    """The exponent is at or below the 1 - 1/d finiteness threshold."""


class SizeError(PreconditionError):
    """Exact enumeration was requested for too many terminals."""


class ParseError(PreconditionError):
    """An instance or fixture file is malformed."""


class PropertyFailure(BranchTransError):
    """A verified property did not hold on some instance."""


class ConvergenceError(BranchTransError, RuntimeError):
    """An iterative method hit its iteration cap.

    The best iterate found so far is attached as ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best

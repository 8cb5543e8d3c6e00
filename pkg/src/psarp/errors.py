"""Exception types raised by the solver library."""


class PsarpError(Exception):
    """Base class for all library errors."""


class DomainError(PsarpError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularityError(PsarpError, ArithmeticError):
    """A hard residual is (numerically) zero where a derivative or model is needed."""


class RankDeficiencyError(PsarpError, ValueError):
    """The smooth element ranges do not span the variable space."""


class UnsupportedOrderError(PsarpError, NotImplementedError):
    """Criticality order above 2 was requested."""


class ConvergenceError(PsarpError, RuntimeError):
    """An inner iterative procedure hit its iteration cap.

    Attributes
    ----------
    best : object
        Best iterate found before giving up.
    residual : float
        Last measured residual (or certified gap when available).
    """

    def __init__(self, message, best=None, residual=float("nan"), diagnostics=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.diagnostics = diagnostics or {}


class InvalidProblemError(PsarpError, ValueError):
    """The problem violates a structural assumption."""

    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)

"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SGDLimitsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(SGDLimitsError, ValueError):
    """Invalid parameter or configuration value."""


class EvaluationError(SGDLimitsError, ArithmeticError):
    """A function evaluated to a non-finite value at a quadrature node or sample."""


class DomainError(SGDLimitsError, ValueError):
    """Argument outside the domain where a formula is defined."""


class ClosedFormInapplicableError(DomainError):
    """A closed-form reduction was requested for an activation it does not cover."""


class DegeneratePurifierError(SGDLimitsError, ValueError):
    """The purifying activation has (numerically) vanishing first Hermite coefficient."""


class ExponentScanError(SGDLimitsError, ValueError):
    """No Hermite coefficient above tolerance within the scanned range."""


class NoFixedPointError(SGDLimitsError, ValueError):
    """The radial right-hand side does not change sign on the bracket."""


class InvariantViolation(SGDLimitsError, RuntimeError):
    """A mathematically guaranteed property failed numerically."""


class NumericalConsistencyError(SGDLimitsError, RuntimeError):
    """Accumulated roundoff pushed a state outside its admissible set."""


class DivergenceError(SGDLimitsError, RuntimeError):
    """A trajectory left the finite region before the requested horizon.

    Attributes
    ----------
    time : float
        Macroscopic time at which the guard fired.
    state : numpy.ndarray
        Last finite state before blow-up (may itself be large).
    """

    def __init__(self, message: str, time: float, state=None):
        super().__init__(message)
        self.time = time
        self.state = state

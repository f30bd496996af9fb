"""Exception hierarchy.

``ValidationError`` covers bad inputs/configuration (CLI exit code 1);
``NumericalError`` covers failures of the numerical machinery itself
(CLI exit code 2). Domain-specific errors subclass one of the two so the
command-line layer can map any library failure to the right exit code.
"""


class FoersterError(Exception):
    """Base class for all package errors."""


class ValidationError(FoersterError):
    """Invalid input, configuration, or state (CLI exit code 1)."""


class NumericalError(FoersterError):
    """Numerical failure: divergence, tolerance not met, non-PSD input
    (CLI exit code 2)."""


class UnknownSeriesError(ValidationError):
    """A requested (l, j) series is absent from the loaded data table."""


class SelectionRuleError(ValidationError):
    """An operation was requested for a dipole-forbidden pair of states."""


class OutOfRegimeError(ValidationError):
    """Electric field outside the perturbative (quadratic-Stark) guard."""


class InvalidPairError(ValidationError):
    """Two collective states do not differ in exactly the named atom pair."""


class ToleranceError(NumericalError):
    """The integrator could not satisfy the requested error tolerance."""

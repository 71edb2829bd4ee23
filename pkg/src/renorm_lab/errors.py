"""Exception hierarchy shared by every module of the lab."""


class RenormLabError(Exception):
    """Base class for all errors raised by renorm_lab."""

    exit_code = 1


class DomainError(RenormLabError, ValueError):
    """An argument lies outside the domain of an operation."""

    exit_code = 2


class ConfigurationError(RenormLabError):
    """Unknown family, bad parameter set or inconsistent experiment config."""

    exit_code = 2


class PreconditionError(RenormLabError):
    """Data required by an operation is missing (e.g. too few digits)."""

    exit_code = 2


class PeriodicOrbit(RenormLabError):
    """The critical orbit closed up exactly: the rotation number is rational."""

    exit_code = 3

    def __init__(self, period, message=None):
        self.period = period
        super().__init__(message or f"critical orbit is periodic with period {period}")


class RangeError(RenormLabError):
    """The target rotation number is not bracketed by the parameter interval."""

    exit_code = 3


class PrecisionExhausted(RenormLabError):
    """Working precision is too low for the requested depth."""

    exit_code = 3


class SolverDepthError(RenormLabError):
    """Two solved maps disagree on their combinatorics before the requested depth."""

    exit_code = 3


class StepError(RenormLabError):
    """No finite-difference step keeps the combinatorics fixed."""

    exit_code = 3


class NotRenormalizable(RenormLabError):
    """The pair has infinite period."""

    exit_code = 4


class PairValidationError(RenormLabError):
    """A commuting pair violates one of the defining clauses.

    ``failures`` maps a clause name to the measured violation.
    """

    exit_code = 4

    def __init__(self, failures):
        self.failures = dict(failures)
        detail = ", ".join(f"{k}: {v}" for k, v in self.failures.items())
        super().__init__(f"commuting pair validation failed ({detail})")


class CombinatoricsError(RenormLabError):
    """Two partitions that should share labels do not."""

    exit_code = 4

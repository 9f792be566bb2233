"""Exception hierarchy shared by all modules."""


class CohortLearnError(Exception):
    """Base class for errors raised by this package."""


class DomainError(CohortLearnError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigError(DomainError):
    """Invalid configuration value."""


class PanelFormatError(CohortLearnError, ValueError):
    """Malformed or incomplete panel input."""


class NumericError(CohortLearnError, ArithmeticError):
    """Non-finite evaluation or failed factorization."""


class SingularStateError(NumericError):
    """RLS second-moment matrix became numerically singular."""

    def __init__(self, cohort, t, cond):
        self.cohort = cohort
        self.t = t
        self.cond = cond
        super().__init__(
            f"singular RLS state for cohort born at s={cohort} at t={t} "
            f"(condition number {cond:.3g})"
        )


class DegenerateDataError(NumericError):
    """A required sum of squares vanished (e.g. constant macro series)."""


class IdentificationError(CohortLearnError, ValueError):
    """Wald/t inference requested for a hypothesis containing beta = 0."""

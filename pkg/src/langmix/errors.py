"""Exception hierarchy for the toolkit.

Every error carries an ``exit_code`` used by the command line driver:
2 for configuration/input problems, 3 for numerical failures.
"""


class LangmixError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 3


class InvalidParameterError(LangmixError, ValueError):
    """A constructor or operation received an out-of-range parameter."""

    exit_code = 2


class InvalidInputError(LangmixError, ValueError):
    """Input data (samples, profiles, configs) violates a precondition."""

    exit_code = 2


class ConfigError(LangmixError):
    """An experiment config file failed to parse or validate."""

    exit_code = 2


class NumericDomainError(LangmixError):
    """A grid evaluation produced a non-finite value; names the offending point."""


class StiffnessError(LangmixError):
    """Implicit ODE step-size collapsed below the floor."""


class EntranceConditionError(LangmixError):
    """The tail integral of 1/G diverges: G admits no entrance at infinity."""


class DescentRangeError(LangmixError):
    """Requested descent time exceeds the inversion range of the integrated field.

    Continue with an ODE integration (``integrate_field``) from the descent
    state at an earlier time.
    """


class BlowUpError(LangmixError):
    """A simulated state became non-finite (should be unreachable; bug signal)."""


class DomainTooSmallError(LangmixError):
    """Density grid truncation certificate failed."""

    def __init__(self, message, suggested_z_max=None):
        super().__init__(message)
        self.suggested_z_max = suggested_z_max


class SolverError(LangmixError):
    """A linear solve inside the density evolution failed."""


class ConservationError(LangmixError):
    """Mass drift of the density evolution exceeded the contract."""


class IncompatibleGridError(LangmixError):
    """Two density grids do not share nodes."""


class HorizonError(LangmixError):
    """A profile never crossed the requested level within its horizon."""

    def __init__(self, message, last_value=None):
        super().__init__(message)
        self.last_value = last_value

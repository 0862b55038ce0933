"""Exception hierarchy shared by all modules."""


class OberbeckError(Exception):
    """Base class for every error raised by this package."""


class SingularSymbolOnMeanMode(OberbeckError):
    """A multiplier undefined at the zero frequency was applied to a field with a mean."""


class BlockOutOfRange(OberbeckError):
    """A dyadic block index outside the representable range was requested."""


class NormDivergent(OberbeckError):
    """Block sums failed the tail (Cauchy) check at the top of the block range."""


class EmptySequence(OberbeckError):
    """A time norm was requested on an empty snapshot sequence."""


class NonPositiveFrequency(OberbeckError):
    """A mode matrix was requested at a frequency r <= 0."""


class NegativeHSquare(OberbeckError):
    """The dissipation functional H^2 has a negative theta coefficient for these weights."""


class NoAdmissibleConstants(OberbeckError):
    """No decay constants (C, c) exist within the search budget."""


class NotCurlFree(OberbeckError):
    """Acoustic velocity data has a divergence-free component."""


class VacuumApproached(OberbeckError):
    """The density factor 1 + eps*a dropped below the safety floor."""


class CflViolation(OberbeckError):
    """The time step exceeds the advective CFL bound."""


class IncompatibleScale(OberbeckError):
    """The product eps*nu is not an exactly representable dyadic scale."""


class TimeGridMismatch(OberbeckError):
    """Two trajectories are not sampled at the same times."""


class DegenerateFit(OberbeckError):
    """A rate fit was requested on too few or non-positive values."""


class IoFailure(OberbeckError):
    """A report or snapshot could not be written or read."""


class ConfigError(OberbeckError):
    """A configuration file does not match the schema."""

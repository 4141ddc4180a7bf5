"""Exception and warning types shared across the package."""


class CatkeeperError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(CatkeeperError):
    """A run configuration is malformed or inconsistent."""


class DimensionOverflowError(CatkeeperError):
    """A requested truncation exceeds the supported Fock-space size."""


class DegenerateStateError(CatkeeperError):
    """A state constructor was asked for a state that does not exist.

    The canonical case is the odd cat at alpha = 0, whose normalization
    1 - exp(-2|alpha|^2) vanishes.
    """


class TruncationError(CatkeeperError):
    """A computation would push significant amplitude past the truncation."""


class IntegrationDivergedError(CatkeeperError):
    """A fixed-step integrator lost trace normalization beyond tolerance."""


class MeasurementDegenerateError(CatkeeperError):
    """Both measurement branches have vanishing probability."""


class TruncationWarning(UserWarning):
    """A constructed state lost more tail mass than the reporting threshold."""

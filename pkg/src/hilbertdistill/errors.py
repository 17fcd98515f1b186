"""Exception types shared across the package."""


class HilbertDistillError(Exception):
    """Base class for domain errors raised by this package."""


class InvalidRegionError(HilbertDistillError, ValueError):
    """A region has a non-positive extent or does not fit the curve."""


class UnsupportedDimensionError(HilbertDistillError, ValueError):
    """An operation was asked for a dimensionality it does not support."""


class DegenerateCodeError(HilbertDistillError, ValueError):
    """A 1D code has zero norm, so normalized losses are undefined."""


class ConfigError(HilbertDistillError, ValueError):
    """A configuration file or flag set failed validation.

    Carries the offending key so front ends can name it.
    """

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class TrainingDivergedError(HilbertDistillError, RuntimeError):
    """Training produced a non-finite loss."""

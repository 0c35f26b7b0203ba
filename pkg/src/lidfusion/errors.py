"""Exception types shared across the package."""


class LidFusionError(Exception):
    """Base class for package errors."""


class ConfigurationError(LidFusionError):
    """Invalid or inconsistent configuration."""


class InputError(LidFusionError):
    """Malformed or out-of-contract input data."""


class DegenerateSliceError(LidFusionError):
    """A data slice is too one-sided for the requested statistic."""

"""Custom exceptions for the benchmark harness."""

from src.utils.exceptions import ConfigError, DataError


class UnknownVariantError(ConfigError):
    """Ablation grid names a variant that does not exist."""

    pass


class UnknownSuiteError(ConfigError):
    """Suite, condition or task name is not recognized."""

    pass


class PolicyMismatchError(DataError):
    """Policy input size does not match the environment's raster."""

    pass


class EpisodeLogError(DataError):
    """Episode log is empty or malformed."""

    pass

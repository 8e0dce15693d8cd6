"""Custom exceptions for configuration handling."""

from src.utils.exceptions import ConfigError


class ConfigNotFoundError(ConfigError):
    """Configuration file does not exist."""

    pass


class ConfigValidationError(ConfigError):
    """Configuration file is not valid JSON or fails validation."""

    pass

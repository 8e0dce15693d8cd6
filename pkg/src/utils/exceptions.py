"""Root exception hierarchy shared by every package.

Each category carries the process exit code the CLI reports for it.
"""


class CirlError(Exception):
    """Base exception for all pipeline errors."""

    exit_code = 1


class ConfigError(CirlError):
    """Invalid or missing configuration."""

    exit_code = 2


class DataError(CirlError):
    """Malformed, mismatched or missing data artifacts."""

    exit_code = 3


class NumericError(CirlError):
    """Non-finite values or other numeric failures."""

    exit_code = 4

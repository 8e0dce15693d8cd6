"""Custom exceptions for the town simulator."""

from src.utils.exceptions import ConfigError, DataError


class SimulationError(DataError):
    """Base exception for simulator errors."""

    pass


class InvalidActionError(SimulationError):
    """Action contains non-finite values."""

    pass


class EpisodeTerminatedError(SimulationError):
    """Step requested on an episode that already ended."""

    pass


class UnreachableGoalError(SimulationError):
    """No lane path connects start and goal."""

    pass


class InvalidEpisodeSpecError(SimulationError):
    """Episode spec references unknown lanes, maps or positions."""

    pass


class MapValidationError(SimulationError):
    """Town map violates a structural invariant."""

    pass


class MapFormatError(ConfigError):
    """Map file cannot be parsed or has an unsupported version."""

    pass

"""Custom exceptions for the trainers."""

from src.utils.exceptions import DataError


class TrainingError(DataError):
    """Base exception for training failures."""

    pass


class MissingBranchDataError(TrainingError):
    """A command branch has no training samples."""

    pass


class MissingCheckpointError(TrainingError):
    """Imitative initialization requested without a usable checkpoint."""

    pass


class MissingDemonstrationsError(TrainingError):
    """Demonstration replay requested without a dataset."""

    pass

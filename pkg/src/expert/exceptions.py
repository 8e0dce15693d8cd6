"""Custom exceptions for the expert and its demonstration datasets."""

from src.utils.exceptions import DataError


class ExpertError(DataError):
    """Base exception for expert errors."""

    pass


class ExpertAbortError(ExpertError):
    """Vehicle drifted too far from the route for the expert to recover."""

    pass


class EmptyDatasetError(ExpertError):
    """Generation produced (or was asked to produce) no samples."""

    pass


class DatasetFormatError(ExpertError):
    """Dataset file is corrupt, truncated or from another format version."""

    pass


class InsufficientDemosError(ExpertError):
    """Balancing could not bring every command up to its minimum sample count."""

    pass

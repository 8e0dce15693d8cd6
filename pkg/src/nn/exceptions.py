"""Custom exceptions for the network engine."""

from src.utils.exceptions import DataError, NumericError


class ShapeError(DataError):
    """Input or gradient dimensions do not match the network."""

    pass


class BackwardWithoutForwardError(DataError):
    """Backward pass requested for an input that was never forwarded."""

    pass


class NonFiniteGradientError(NumericError):
    """A gradient entry is NaN or infinite; the update was rejected."""

    pass


class NonFiniteValueError(NumericError):
    """A forward pass produced NaN or infinite values."""

    pass


class CheckpointError(DataError):
    """Checkpoint file is corrupt, of an unknown version, or mismatched."""

    pass

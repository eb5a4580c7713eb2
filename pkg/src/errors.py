"""
Exception hierarchy for the augmentation benchmark.

Library code raises these; only the CLI maps them to process exit codes.
"""

from typing import Optional


class AugBenchError(Exception):
    """Base class for all benchmark errors."""

    exit_code = 2


class DataError(AugBenchError):
    """Input data could not be read, decoded or partitioned."""


class ImageNotFound(DataError):
    pass


class UnsupportedFormat(DataError):
    pass


class CorruptImage(DataError):
    pass


class ImageIoError(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class DegenerateImage(DataError):
    pass


class EmptyDataset(DataError):
    pass


class NotTrimmed(DataError):
    pass


class InsufficientFolds(DataError):
    pass


class AlreadyAugmented(DataError):
    """An augmented item reached a step that takes originals only."""


class DuplicateOutput(DataError):
    """Two items would be written to the same output file."""


class InvalidParameters(AugBenchError):
    """Augmentation parameters outside their valid range."""

    exit_code = 1



class ResultsParseError(DataError):
    """A results file line is not a valid result object."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ShapeMismatch(AugBenchError):
    pass


class NumericalFailure(AugBenchError):
    """NaN or Inf reached a tensor during training."""

    exit_code = 3

    def __init__(
        self, message: str, epoch: Optional[int] = None, batch: Optional[int] = None
    ):
        context = []
        if epoch is not None:
            context.append(f"epoch {epoch}")
        if batch is not None:
            context.append(f"batch {batch}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class CheckpointError(DataError):
    """A model checkpoint is unreadable or of an unknown version."""

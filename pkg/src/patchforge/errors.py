"""Exception types shared across the pipeline."""


class PatchforgeError(Exception):
    """Base class for all package errors."""


class EmptyInput(PatchforgeError):
    """Source text is empty or whitespace-only."""


class ParseError(PatchforgeError):
    """Syntax violation in source text."""

    def __init__(self, message, line, column):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class FormatError(PatchforgeError):
    """Malformed serialized data."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"offset {offset}: {message}"
        super().__init__(message)
        self.offset = offset


class InconsistentMapping(PatchforgeError):
    """A mapping references node ids not present in the trees."""


class SpanNotStatement(PatchforgeError):
    """A span does not resolve to a statement node."""


class TooLong(PatchforgeError):
    """Token sequence exceeds the configured length limit."""

    def __init__(self, length, limit):
        super().__init__(f"sequence has {length} tokens, limit is {limit}")
        self.length = length
        self.limit = limit


class ShapeMismatch(PatchforgeError):
    """Tensor shapes are inconsistent with the model configuration."""


class LengthExceeded(PatchforgeError):
    """Input sequence is longer than the model's maximum length."""


class DivergenceDetected(PatchforgeError):
    """Training loss became non-finite."""


class ConfigMismatch(PatchforgeError):
    """Checkpoint does not fit the requested model configuration."""


class CheckerUnavailable(PatchforgeError):
    """A configured external checker could not be run."""


class SpanOutOfDate(PatchforgeError):
    """File text no longer matches a patch candidate's recorded span."""


class LengthMismatch(PatchforgeError):
    """Prediction and reference lists have different lengths."""


class MissingTimestamp(PatchforgeError):
    """A record lacks the timestamp required for a time split."""


class StageMismatch(PatchforgeError):
    """A pipeline command received records at the wrong stage."""

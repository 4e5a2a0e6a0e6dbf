"""Exception hierarchy shared by every genesift module."""


class GenesiftError(Exception):
    """Base class for all errors raised by this package."""


class DataError(GenesiftError):
    """Input data violates a Dataset invariant (NaN under reject, single class, ...)."""


class ParseError(DataError):
    """A CSV or manifest line could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SplitError(DataError):
    pass


class MaskError(GenesiftError):
    """A feature mask is empty or has the wrong length."""


class ShapeError(GenesiftError):
    pass


class StateError(GenesiftError):
    """An optimizer step was called on a population that is not ready."""


class NumericError(GenesiftError):
    """A non-finite value appeared during training."""


class EvaluationError(GenesiftError):
    pass


class ObjectiveError(GenesiftError):
    """The objective raised while scoring a mask; the mask is kept for inspection."""

    def __init__(self, message, mask=None):
        super().__init__(message)
        self.mask = mask


class StageError(GenesiftError):
    """Wraps a failure inside the pipeline with the stage it happened in."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause

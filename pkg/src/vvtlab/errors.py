"""Shared exception types, mapped onto CLI exit codes in one place."""


class ConfigError(ValueError):
    """A run was asked for with invalid or inconsistent parameters."""


class DataError(ValueError):
    """Input files, shapes, or dataset bookkeeping are broken."""


class ClipFormatError(DataError):
    """A clip file does not start with the expected container magic."""


class CorruptClipError(DataError):
    """A clip file's header and payload disagree."""


class ManifestError(DataError):
    """A dataset manifest is malformed or references bad files."""


class ContaminationError(DataError):
    """A clip id appears in both the train and the test split."""


class NonFiniteError(ValueError):
    """A loss input or output is NaN or infinite."""


class NumericAbort(RuntimeError):
    """Training hit a non-finite loss and stopped."""

    def __init__(self, step: int, detail: str = "non-finite loss"):
        super().__init__(f"aborted at step {step}: {detail}")
        self.step = step

"""Exception types shared across the package.

Every error carries a short machine-parseable ``code`` slug so the CLI can
emit one-line structured errors.
"""


class SentmaskError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class DataError(SentmaskError):
    code = "data"


class EmptyDocumentError(DataError):
    code = "empty-document"


class ConfigError(SentmaskError):
    code = "config"


class TrainingDivergedError(SentmaskError):
    code = "diverged"


class UntrainedModelError(SentmaskError):
    code = "untrained-model"

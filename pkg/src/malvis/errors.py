"""Exception types shared across the package."""


class MalvisError(Exception):
    """Base class for all package errors."""


class EmptyFileError(MalvisError):
    """Raised when an operation receives a zero-length byte sequence."""


class NotPEError(MalvisError):
    """Input does not carry the MZ / PE signatures."""


class TruncatedHeaderError(MalvisError):
    """PE header or section table extends past the end of the file."""


class UndefinedEntropyError(MalvisError):
    """Entropy requested for an empty byte sequence."""


class UsageError(MalvisError):
    """Caller violated an API contract (dimension mismatch, unfitted model, ...)."""


class DivergenceError(MalvisError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")

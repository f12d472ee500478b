"""Exception types shared across the package."""


class CsiSenseError(Exception):
    """Base class for all package errors."""


class DomainError(CsiSenseError, ValueError):
    """A value violates a documented precondition or invariant."""


class FormatError(CsiSenseError):
    """A file does not conform to its declared on-disk format."""


class ChecksumError(FormatError):
    """Stored checksum does not match the file contents."""


class VersionError(FormatError):
    """File carries a format version this build does not understand."""


class TrainingDiverged(CsiSenseError):
    """Loss became non-finite during training."""

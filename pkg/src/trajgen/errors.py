"""Exception types shared across the package."""


class TrajgenError(Exception):
    """Base class for package errors."""


class DataError(TrajgenError):
    """Malformed, missing, or corrupted input data."""

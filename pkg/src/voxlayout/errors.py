"""Exception types shared across the package."""


class VoxLayoutError(Exception):
    """Base class for all domain errors raised by this package."""


class InvalidArgument(VoxLayoutError, ValueError):
    """An argument violates a documented precondition or invariant."""


class OutOfDomain(VoxLayoutError):
    """A geometric query lies entirely outside the supported domain."""


class NumericDomainError(VoxLayoutError):
    """Numerical input leaves the valid domain (e.g. non-PSD covariance)."""


class ParseError(VoxLayoutError):
    """A file could not be parsed; message carries the offending location."""

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)

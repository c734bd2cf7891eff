"""Exception types shared across the package."""


class DccfError(Exception):
    """Base class for package-specific failures."""


class ImageFormatError(DccfError):
    """Raised when an image file cannot be decoded (corrupt header, bad depth, ...)."""


class StackFormatError(DccfError):
    """Raised when a filter-stack container is malformed (magic, version, truncation)."""


class NumericalError(DccfError):
    """Raised when an optimization produces non-finite values."""

"""Exception types shared across the package.

Plain ``ValueError`` is used for ordinary argument validation; the classes
here exist where callers need to distinguish failure modes programmatically.
"""


class GnnRegError(Exception):
    """Base class for package-specific errors."""


class DegeneracyError(GnnRegError, ValueError):
    """A graph is structurally unusable for the requested operation,
    e.g. a zero-degree node under a normalized propagation kind."""


class NumericError(GnnRegError, RuntimeError):
    """A numerical routine failed to converge or produced non-finite values."""


class FormatError(GnnRegError, ValueError):
    """An on-disk artifact does not match its documented schema."""

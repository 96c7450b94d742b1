"""Exception types shared across the package.

The CLI maps these onto process exit codes, so everything user-facing
should raise one of them rather than a bare Exception.
"""


class NanocnnError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(NanocnnError, ValueError):
    """A caller-supplied value violates an operation's contract."""


class DataFormatError(NanocnnError):
    """A file on disk does not match its documented format."""


class CorruptedStateError(NanocnnError):
    """Internal state (buffers, graph structure) is inconsistent."""


class NumericFailureError(NanocnnError):
    """A non-finite value appeared where the computation requires finite ones."""

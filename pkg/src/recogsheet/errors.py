"""Exception hierarchy. The CLI maps each family to its own exit code."""


class RecogError(Exception):
    """Base class for all package errors."""


class InvalidArgument(RecogError, ValueError):
    """A caller-supplied parameter violates a precondition."""


class InvalidData(RecogError, ValueError):
    """Input data is malformed: non-finite values, bad ids, bad layout."""


class EmptySelection(InvalidArgument):
    """A dataset filter matched no frames."""


class DataIOError(RecogError, OSError):
    """A file could not be read or written."""

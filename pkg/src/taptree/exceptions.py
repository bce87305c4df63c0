"""Exception hierarchy shared by every stage of the toolkit."""


class TapTreeError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(TapTreeError, ValueError):
    """A log line is not a well-formed JSON object."""

    def __init__(self, message, position=None):
        super().__init__(message if position is None else f"{message} (at {position})")
        self.position = position


class SchemaError(TapTreeError, ValueError):
    """A record is valid JSON but misses a mandatory key or has a bad value."""

    def __init__(self, key, message=None):
        super().__init__(message or f"missing or invalid field: {key!r}")
        self.key = key


class CorruptInputError(TapTreeError):
    """Too many malformed lines in an event stream."""


class IoError(TapTreeError, OSError):
    pass


class MergePreconditionError(TapTreeError, ValueError):
    """Neither tree root label occurs in the other tree."""


class EmptyModelError(TapTreeError, ValueError):
    pass


class EmptyInputError(TapTreeError, ValueError):
    pass


class EmptyForestError(TapTreeError, ValueError):
    pass


class SingleClassError(TapTreeError, ValueError):
    """Training data carries only one class label."""


class StageError(TapTreeError, ValueError):
    """A baseline model is at the wrong fusion stage for the requested operation."""


class FormatError(TapTreeError, ValueError):
    """An artifact file is truncated or structurally malformed."""


class VersionMismatchError(FormatError):
    pass

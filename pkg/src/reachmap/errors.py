"""Exception hierarchy shared by every reachmap module."""


class ReachMapError(Exception):
    """Base class for all reachmap errors."""


class InvalidArgumentError(ReachMapError, ValueError):
    """An argument is malformed, non-finite, or inconsistent with another."""


class ValidationError(ReachMapError, ValueError):
    """A model or config violates an invariant; ``field`` names the offender."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ConfigParseError(ReachMapError, ValueError):
    """Structured text could not be parsed."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)


class ResourceLimitError(ReachMapError):
    """A requested grid or sample count exceeds its configured cap."""


class ContractError(ReachMapError):
    """An operation was called on data in the wrong state, e.g. the wrong frame."""


class GridFormatError(ReachMapError):
    """An SPRM file has the wrong magic or an unsupported version."""


class GridCorruptionError(ReachMapError):
    """An SPRM file is truncated or internally inconsistent."""

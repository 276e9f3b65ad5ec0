"""Exception hierarchy shared by all dialeval modules.

CLI exit-code mapping: ConfigError -> 1 (usage), DataError and subclasses
-> 2, NumericError -> 3.
"""


class DialevalError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(DialevalError):
    """Invalid parameter or option value (e.g. non-positive bandwidth)."""


class DataError(DialevalError):
    """Input data cannot be used as-is."""


class ParseError(DataError):
    """File is not syntactically valid; carries a location when known."""

    def __init__(self, message, *, offset=None, line=None):
        loc = []
        if offset is not None:
            loc.append(f"byte offset {offset}")
        if line is not None:
            loc.append(f"line {line}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.offset = offset
        self.line = line


class SchemaError(DataError):
    """File parses but violates the expected structure."""


class ValidationError(DataError):
    """A value is outside its documented domain."""


class JoinError(DataError):
    """A cross-reference does not resolve (unknown id, missing vector)."""


class ContractError(DialevalError):
    """An operation was called with arguments violating its preconditions."""


class NumericError(DialevalError):
    """A numerical routine failed (singular matrix, non-finite result)."""

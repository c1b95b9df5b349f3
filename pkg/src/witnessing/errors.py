"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class WitnessingError(Exception):
    """Base class for every domain-level failure raised by this package."""


class DomainError(WitnessingError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class CapacityError(WitnessingError):
    """A bloom filter already holds its committed number of elements."""


class StatementNotFound(WitnessingError, LookupError):
    pass


class CoverageError(WitnessingError, LookupError):
    """A consulted witness has no statement covering a probed packet."""


class TraceFormatError(WitnessingError, ValueError):
    """A session-log or adjacency row could not be parsed."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SpecError(WitnessingError, ValueError):
    """A trace-generator or simulation config is malformed.

    ``field`` names the offending key so the CLI can report it.
    """

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        super().__init__(f"{field}: {message}")

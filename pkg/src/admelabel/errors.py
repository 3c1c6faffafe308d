"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class AdmeError(Exception):
    """Base class for every error raised by this package."""


class IngestionError(AdmeError):
    """A label index or document could not be retrieved."""

    def __init__(self, message: str, cursor: object = None):
        super().__init__(message)
        self.cursor = cursor


class SplParseError(AdmeError):
    """Malformed SPL XML or index payload.

    ``position`` is a ``(line, column)`` tuple for XML input and a byte
    offset for JSON index payloads.
    """

    def __init__(self, message: str, position: object = None, source: str | None = None):
        super().__init__(message)
        self.position = position
        self.source = source


class ValidationError(AdmeError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class ConfigError(AdmeError):
    pass


class FitError(AdmeError):
    pass


class DimensionError(AdmeError):
    pass


class CheckpointError(AdmeError):
    pass


class CrossValidationError(AdmeError):
    """A trainer failed mid-protocol; ``completed`` holds finished runs."""

    def __init__(self, message: str, completed: list):
        super().__init__(message)
        self.completed = completed

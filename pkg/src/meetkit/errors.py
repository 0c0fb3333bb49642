"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError (and its
subclasses) -> 3.
"""

from __future__ import annotations


class MeetkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(MeetkitError):
    """Invalid run configuration or invalid flag combination."""


class DataError(MeetkitError):
    """Input data violates a documented contract."""


class FormatError(DataError):
    """Malformed external file. Carries file path and line number."""

    def __init__(self, path: str, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")

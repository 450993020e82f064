"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
EndpointError -> 3.
"""

from __future__ import annotations


class FincurateError(Exception):
    """Base class for all package errors."""


class ConfigError(FincurateError):
    """Invalid or missing configuration (files, flags, stage names)."""


class DataError(FincurateError):
    """Malformed records, schema violations, duplicate ids, missing files."""


class EndpointError(FincurateError):
    """A remote endpoint call failed terminally (after retries, if any)."""

    def __init__(self, message: str, *, status: int | None = None, retryable: bool = False):
        super().__init__(message)
        self.status = status
        self.retryable = retryable

"""Typed errors shared across the pipeline.

The CLI maps these onto exit codes: ValidationError -> 2,
StageOrderError -> 3, TransportError -> 4.
"""

from __future__ import annotations


class RedevalError(Exception):
    """Base class for all package errors."""


class ValidationError(RedevalError):
    """Bad input, bad config value, or an inconsistent in-memory structure."""


class DegenerateInputError(ValidationError):
    """A statistic was requested on an input too small to define it."""


class StageOrderError(RedevalError):
    """A pipeline stage ran before the stage that produces its inputs."""

    def __init__(self, message: str, missing_artifact: str | None = None):
        super().__init__(message)
        self.missing_artifact = missing_artifact


class TransportError(RedevalError):
    """The model provider could not be reached or kept failing after retries."""


class ParseError(RedevalError):
    """Model output stayed malformed after the single re-ask.

    Carries the raw transcript so failures can be inspected offline.
    """

    def __init__(self, message: str, transcript: list[dict] | None = None):
        super().__init__(message)
        self.transcript = transcript or []


class SampleSkipped(RedevalError):
    """A single generation sample was abandoned; the run continues."""

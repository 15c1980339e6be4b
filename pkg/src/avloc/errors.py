"""Exception hierarchy shared across the toolkit.

The CLI maps these to exit code 1 (data/validation errors); argument parsing
problems surface as usage errors with exit code 2.
"""


class AvlocError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(AvlocError, ValueError):
    """An input violates a documented precondition or invariant."""


class TensorFormatError(AvlocError):
    """A tensor file is malformed. ``code`` names the failing check."""

    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code


class ManifestError(AvlocError):
    """A manifest is malformed or references missing data."""

"""Package-wide error types, mapped onto CLI exit codes."""

__all__ = ["FormatError", "GuardError", "LinearityError"]


class FormatError(Exception):
    """A key, matrix, measurement or image file is malformed (CLI exit 3)."""


class GuardError(Exception):
    """A numeric guard was exceeded (dense-size or search-size limits, CLI exit 4)."""


class LinearityError(Exception):
    """An encryption oracle failed the linearity spot check."""

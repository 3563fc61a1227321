"""Exception hierarchy shared by every stage of the pipeline.

The CLI maps these onto exit codes: data problems exit 3, numeric invariant
breaches exit 4, anything else unexpected exits 1.
"""


class NidlError(Exception):
    """Base class for all pipeline errors."""


class DataValidationError(NidlError, ValueError):
    """Input data violates a documented format or invariant."""


class FormatError(DataValidationError):
    """A file could not be decoded. ``offset`` is the byte (or line) position."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(DataValidationError):
    """A configuration is inconsistent with the data it is applied to."""


class NumericInvariantError(NidlError, ArithmeticError):
    """A numeric invariant (finiteness, range, checksum) was breached."""

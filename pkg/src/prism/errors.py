"""Exception types raised across the package."""


class PrismError(Exception):
    """Base class for all package errors."""


class InputError(PrismError, ValueError):
    """An argument violates a documented precondition."""


class ShapeError(InputError):
    """Array dimensions do not line up."""


class ParseError(PrismError, ValueError):
    """A file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(PrismError, ValueError):
    """Parsed content is well-formed but violates the schema."""


class CompatibilityError(PrismError):
    """A serialized artifact has an unsupported schema version."""


class CapacityError(PrismError, ValueError):
    """An exhaustive search would exceed its enumeration budget."""


class NumericError(PrismError, ArithmeticError):
    """A non-finite value showed up where a finite one is required."""


class EvaluationError(PrismError):
    """A statistic is undefined for the given data."""

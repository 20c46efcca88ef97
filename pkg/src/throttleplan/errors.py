"""Exception types shared across the package."""


class ThrottlePlanError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ThrottlePlanError):
    """Invalid input data (bad profile values, malformed parameters, ...)."""


class ParseError(ValidationError):
    """A file could not be parsed. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InfeasibleError(ThrottlePlanError):
    """No feasible plan exists for the given capacity / parameters."""

"""Exception types shared across the package."""


class QndSpinError(Exception):
    """Base class for physics/pipeline errors (CLI exit code 3)."""


class InvalidParameterError(QndSpinError):
    """An argument violates a documented precondition."""


class GeometryError(QndSpinError):
    """Cavity geometry is non-physical (e.g. mirror radius <= L/2)."""


class FitError(QndSpinError):
    """A lineshape fit cannot even be attempted (degenerate trace)."""


class UnsupportedSequenceError(QndSpinError):
    """No closed-form added-noise table exists for this sequence."""


class ConfigError(QndSpinError):
    """Config file parse/validation failure (CLI exit code 1)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

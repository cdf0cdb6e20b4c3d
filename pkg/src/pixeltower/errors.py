"""Exception types shared across the package."""


class PixeltowerError(Exception):
    """Base class for all domain errors raised by this package."""


class HexParseError(PixeltowerError):
    """Malformed line in a .hex font file."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ShapeError(PixeltowerError):
    """Operands with incompatible shapes."""


class ContractError(PixeltowerError):
    """A documented precondition was violated by the caller."""


class ConfigError(PixeltowerError):
    """Invalid model or run configuration."""


class DataError(PixeltowerError):
    """Malformed or insufficient input data."""


class CompositionError(PixeltowerError):
    """Text band does not fit on the target canvas."""

"""Exception hierarchy shared across the package."""


class SarcnetError(Exception):
    """Base class for all package errors."""


class DimensionError(SarcnetError, ValueError):
    pass


class DomainError(SarcnetError, ValueError):
    pass


class NumericError(SarcnetError, ArithmeticError):
    pass


class ConfigError(SarcnetError, ValueError):
    pass


class ParseError(SarcnetError, ValueError):
    """Malformed input file; ``lineno`` is 1-based when known."""

    def __init__(self, message, lineno=None):
        super().__init__(message if lineno is None else f"line {lineno}: {message}")
        self.lineno = lineno


class FormatError(SarcnetError, ValueError):
    pass


class IntegrityError(FormatError):
    pass


class UnsupportedVariantError(SarcnetError, ValueError):
    pass

"""Exception types raised across the package."""


class AclError(Exception):
    """Base class for all package errors."""


class DimensionError(AclError, ValueError):
    pass


class RankError(AclError, ValueError):
    pass


class StateError(AclError, RuntimeError):
    pass


class ArgumentError(AclError, ValueError):
    pass


class ConfigurationError(AclError, ValueError):
    pass


class NonFiniteError(AclError, FloatingPointError):
    pass


class UndefinedCorrelationError(AclError, ValueError):
    pass


class ParseError(AclError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

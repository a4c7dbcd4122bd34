"""Exception types raised across the package."""


class HinError(Exception):
    """Base class for all package errors."""


class DimensionError(HinError, ValueError):
    pass


class ConfigError(HinError, ValueError):
    pass


class LabelError(HinError, ValueError):
    pass


class UsageError(HinError, RuntimeError):
    pass


class IngestError(HinError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EncodeError(HinError, ValueError):
    pass


class EvalError(HinError, ValueError):
    pass


class DivergenceError(HinError, RuntimeError):
    pass

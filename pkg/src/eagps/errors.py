"""Exception hierarchy shared across the package."""


class EAGPSError(Exception):
    """Base class for every error raised by eagps."""


class ParseError(EAGPSError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDataError(EAGPSError):
    pass


class ConfigError(EAGPSError):
    pass


class DimensionError(EAGPSError, ValueError):
    pass


class NonFiniteError(EAGPSError, FloatingPointError):
    pass


class GradCheckInvalid(EAGPSError):
    """The loss function is not deterministic, so finite differences are meaningless."""


class CheckpointError(EAGPSError):
    pass


class PositionRangeError(EAGPSError, IndexError):
    pass

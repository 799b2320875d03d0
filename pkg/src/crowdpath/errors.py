"""Exception hierarchy for crowdpath."""


class CrowdPathError(Exception):
    """Base class for every error raised by this package."""


class InvalidGeometryError(CrowdPathError, ValueError):
    pass


class InsufficientHistoryError(CrowdPathError, ValueError):
    pass


class ShapeError(CrowdPathError, ValueError):
    pass


class DomainError(CrowdPathError, ValueError):
    pass


class ConfigError(CrowdPathError, ValueError):
    pass


class ParseError(CrowdPathError, ValueError):
    """Malformed input text. ``line`` is 1-based, or None when not line-specific."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(CrowdPathError, ValueError):
    pass


class FormatError(CrowdPathError, ValueError):
    pass


class NoPathError(CrowdPathError, RuntimeError):
    pass


class PredictionError(CrowdPathError, RuntimeError):
    pass

"""Exception types shared across the package."""


class FormatError(ValueError):
    """A serialized artifact is malformed or has been tampered with."""


class ParseError(ValueError):
    """A data file failed to parse.

    Carries the offending path and 1-based line number so callers can
    report actionable errors.
    """

    def __init__(self, message, path=None, line=None):
        detail = message
        if path is not None:
            detail = f"{path}:{line}: {message}" if line is not None else f"{path}: {message}"
        super().__init__(detail)
        self.path = path
        self.line = line


class ConfigError(ValueError):
    """A pipeline configuration failed schema validation."""


class NotFittedError(ValueError, AttributeError):
    """An estimator was used before calling ``fit``."""

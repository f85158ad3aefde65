"""Exception hierarchy shared by all ktm modules."""


class KtmError(Exception):
    """Base class for every error raised by ktm."""


class InvalidInputError(KtmError, ValueError):
    """Malformed data passed to an operation (empty trajectory, wrong shape, ...)."""


class InvalidConfigError(KtmError, ValueError):
    """A hyperparameter or configuration value violates its constraint."""


class TrainingError(KtmError, RuntimeError):
    """Training diverged or otherwise failed."""


class ParseError(KtmError, ValueError):
    """A file could not be parsed. Carries the offending line when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

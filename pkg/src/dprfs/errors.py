"""Exception types raised across the package."""


class DprfsError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(DprfsError, ValueError):
    """A distribution parameter is outside its valid domain."""


class InputError(DprfsError, ValueError):
    """Observed data is malformed or inconsistent (e.g. dimension mismatch)."""


class StateError(DprfsError, RuntimeError):
    """Internal bookkeeping of a sampler or statistic is inconsistent."""


class FormatError(InputError):
    """A dataset or trace file could not be parsed.

    ``line`` is the 1-based line number of the offending record, when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

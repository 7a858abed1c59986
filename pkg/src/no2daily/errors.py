"""Exception hierarchy shared by every stage.

``InputError`` maps to CLI exit status 2 and ``NumericalError`` to 3.
"""


class No2DailyError(Exception):
    """Base class for all errors raised by this package."""


class InputError(No2DailyError, ValueError):
    """Malformed, inconsistent or insufficient input data."""


class IngestError(InputError):
    """A CSV file could not be loaded.

    ``line`` is the 1-based physical line number of the offending row, or
    ``None`` when the problem is not tied to a single row.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class CoverageError(InputError):
    """Some days of a period cannot be interpolated or predicted."""

    def __init__(self, message, missing_dates=()):
        self.missing_dates = tuple(missing_dates)
        super().__init__(message)


class NumericalError(No2DailyError, RuntimeError):
    """A numerical routine failed (singular system, non-finite values...)."""


class RankDeficiencyError(NumericalError):
    def __init__(self, message, dependent_columns=()):
        self.dependent_columns = tuple(dependent_columns)
        super().__init__(message)


class ConvergenceError(NumericalError):
    def __init__(self, message, trace=()):
        self.trace = list(trace)
        super().__init__(message)

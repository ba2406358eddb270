"""Exception types shared across the package."""


class TeflError(Exception):
    """Base class for all package errors."""


class InvalidInput(TeflError, ValueError):
    pass


class NotEnoughData(TeflError, ValueError):
    pass


class IoError(TeflError, OSError):
    pass


class ParseError(TeflError, ValueError):
    def __init__(self, row, col, message=""):
        self.row = row
        self.col = col
        super().__init__(f"parse error at row {row}, col {col}" + (f": {message}" if message else ""))


class ConfigError(TeflError, ValueError):
    pass


class MissingHistory(TeflError, LookupError):
    def __init__(self, issue_time):
        self.issue_time = issue_time
        super().__init__(f"no forecast logged for issue time {issue_time}")


class CausalityViolation(TeflError, AssertionError):
    def __init__(self, index, t):
        self.index = index
        self.t = t
        super().__init__(f"read of series index {index} while predicting at t={t}")


class DegenerateVariance(TeflError, ArithmeticError):
    pass


class NumericFailure(TeflError, ArithmeticError):
    pass

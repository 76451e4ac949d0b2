"""Exception hierarchy.

CLI exit codes map onto two families: configuration problems (exit 2) and
numerical failures (exit 3).
"""


class HtpcaError(Exception):
    """Base class for all package errors."""


class ConfigError(HtpcaError, ValueError):
    """Invalid user-supplied configuration or parameters."""


class ParameterDomainError(ConfigError):
    """A distribution or estimator parameter lies outside its domain."""


class NumericalError(HtpcaError, ArithmeticError):
    """A computation could not produce a trustworthy result."""


class NotPSDError(NumericalError):
    """Matrix is indefinite beyond round-off."""


class DegenerateSampleError(NumericalError):
    """Sample has zero spread, so scale/location are undefined."""


class IllConditionedRowError(NumericalError):
    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"row {row} has too many near-zero entries")


class ZeroColumnError(NumericalError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column} is identically zero")


class NonConvergenceError(NumericalError):
    """Iterative solver hit its iteration cap; ``last`` holds the final iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class ParseError(ConfigError):
    """Malformed input file."""

    def __init__(self, message, line=None, offset=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.offset = offset

"""Exception types, each mapped to a CLI exit code."""


class QremError(Exception):
    exit_code = 1


class ValidationError(QremError, ValueError):
    """Malformed input: bad shapes, non-stochastic matrices, inconsistent structures."""

    exit_code = 1


class CoverageError(QremError):
    """The data does not contain every (subset, state) cell that an estimate needs."""

    exit_code = 2

    def __init__(self, message: str, missing=None):
        super().__init__(message)
        self.missing = list(missing or [])


class SingularModelError(QremError, ArithmeticError):
    """A noise matrix cannot be inverted reliably."""

    exit_code = 3

"""Exception taxonomy shared across the package.

Contract violations are programming errors at call sites; configuration
errors are bad user-supplied settings; parse errors are malformed input
files; numeric errors are runtime floating-point failures.
"""


class ContractError(ValueError):
    """A documented precondition of an operation was violated."""


class ConfigError(ValueError):
    """A configuration value or combination is invalid."""


class ParseError(ValueError):
    """An input file does not match its declared format."""


class NumericError(RuntimeError):
    """A computation produced non-finite values or otherwise failed numerically."""


class ConvergenceError(NumericError):
    """An iterative routine hit its iteration cap.

    Carries ``last_estimate`` so callers can inspect how far it got.
    """

    def __init__(self, message, last_estimate):
        super().__init__(message)
        self.last_estimate = last_estimate

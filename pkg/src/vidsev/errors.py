"""Exception types shared across the package.

The CLI maps ConfigError to exit code 2 and DomainError to exit code 3;
everything else is an ordinary failure.
"""


class VidsevError(Exception):
    """Base class for all package errors."""


class ConfigError(VidsevError, ValueError):
    """A configuration value or combination of values is invalid."""


class DomainError(VidsevError, ValueError):
    """Input data violates an operation's preconditions."""


class NumericError(VidsevError, ArithmeticError):
    """A computation produced non-finite values."""

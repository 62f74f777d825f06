"""Exception types shared across the package.

The CLI maps each family to a distinct exit status.
"""


class GrimError(Exception):
    """Base class for every error raised by grimapprox."""


class ConfigError(GrimError, ValueError):
    """Invalid run parameters or parameters inconsistent with the data."""


class DataError(GrimError, ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(GrimError, ArithmeticError):
    """A numerical routine failed to meet its accuracy contract."""

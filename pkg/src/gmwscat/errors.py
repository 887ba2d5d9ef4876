"""Exception types shared across the package.

The CLI maps these onto distinct exit codes (config 2, data 3, numeric 4).
"""


class ConfigError(ValueError):
    """Invalid parameters or configuration (bad wavelet params, rates, flags)."""


class DataError(RuntimeError):
    """Unreadable, malformed, or structurally unexpected input data."""


class NumericError(ArithmeticError):
    """Non-finite values or a numerical routine that failed to converge."""

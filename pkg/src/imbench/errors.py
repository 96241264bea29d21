"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad technique string, fractions, hyperparameters."""


class DataError(ValueError):
    """Invalid or degenerate data: missing files, bad labels, empty classes."""


class NumericsError(RuntimeError):
    """Training diverged: NaN/Inf appeared in parameters or losses."""

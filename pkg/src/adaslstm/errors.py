"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 1,
DataFormatError -> 2, NumericalError -> 3.
"""


class DimensionError(ValueError):
    """Raised when tensor shapes do not line up for an operation."""


class ConfigError(ValueError):
    """Raised for malformed config files, unknown keys, or bad values."""


class DataFormatError(ValueError):
    """Raised for unparseable dataset rows; messages include line numbers."""


class NumericalError(RuntimeError):
    """Raised when training or inference produces non-finite values."""

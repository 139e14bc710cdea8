"""Exception types shared across the package.

The CLI maps these to exit codes: ConfigurationError -> 2, DataError -> 3.
"""


class ConfigurationError(ValueError):
    """Invalid or inconsistent configuration (shapes, hyper-parameters, paths)."""


class DataError(ValueError):
    """Malformed or inconsistent runtime data (masks, sequences, class maps)."""

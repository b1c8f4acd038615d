"""Error taxonomy shared across the pipeline.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class LegibilityError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(LegibilityError):
    """Invalid or inconsistent configuration."""


class DataError(LegibilityError):
    """Malformed, missing, or contract-violating input data."""


class NumericError(LegibilityError):
    """Numeric failure (non-finite values, diverging optimization)."""

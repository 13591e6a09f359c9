"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code so failures stay distinguishable
from the shell: config problems exit 2, data ingestion problems exit 3,
numerical failures exit 4.
"""


class AnalogcastError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(AnalogcastError):
    """Invalid configuration value, missing key, or inconsistent options."""

    exit_code = 2


class DataError(AnalogcastError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class NumericError(AnalogcastError):
    """Numerical failure: singular system, degenerate geometry, overflow."""

    exit_code = 4

"""Exception types shared across the toolkit.

The CLI maps these onto stable exit codes (config 2, data 3, artifact 4,
integrity 5), so library code should raise the most specific one that applies.
"""


class QfolioError(ValueError):
    """Base class for all toolkit errors."""


class ConfigError(QfolioError):
    """Invalid configuration value or malformed config file."""


class DataError(QfolioError):
    """Invalid, inconsistent, or insufficient market data."""


class ArtifactError(QfolioError):
    """Missing artifact or artifact incompatible with the requested run."""


class IntegrityError(QfolioError):
    """Corrupt run directory: bad manifest or artifact hash mismatch."""

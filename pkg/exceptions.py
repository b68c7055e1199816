"""
Exception types raised across the Churn Lab packages.
"""


class ChurnLabError(Exception):
    """Base class for every diagnosable Churn Lab failure."""


class DatasetFormatError(ChurnLabError, ValueError):
    """Feature-matrix or split file does not match the expected format."""


class SplitError(ChurnLabError, ValueError):
    """Requested split would be degenerate."""


class ShapeError(ChurnLabError, ValueError):
    """Array dimensions do not line up."""


class ConfigError(ChurnLabError, ValueError):
    """Run configuration is invalid."""


class InsufficientDataError(ChurnLabError, ValueError):
    """Not enough rows, seeds or mass to compute the requested quantity."""


class NumericalError(ChurnLabError, ArithmeticError):
    """A numerical routine failed (e.g. kernel matrix not positive definite)."""


class TrainingError(ChurnLabError):
    """Training of one experiment cell failed."""

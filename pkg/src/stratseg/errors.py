"""Shared exception types."""


class BoundsError(ValueError):
    """A crop region or index falls outside its source grid."""


class ShapeError(ValueError):
    """Grid shapes are incompatible for the requested operation."""


class ConfigError(ValueError):
    """A configuration value violates a construction-time contract."""

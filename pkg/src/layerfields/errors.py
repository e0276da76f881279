"""Exception types shared across the package.

Each class carries the process exit code the CLI maps it to.
"""


class LayerFieldsError(Exception):
    """Base class for package errors."""

    exit_code = 1


class ConfigError(LayerFieldsError):
    """Invalid configuration or arguments."""

    exit_code = 2


class DataError(LayerFieldsError):
    """Malformed datasets, assets, or checkpoints."""

    exit_code = 3


class NumericalError(LayerFieldsError):
    """NaN/divergence detected during optimization."""

    exit_code = 4


class OutOfChartError(LayerFieldsError):
    """Point lies outside the frontal half-space of the UV chart."""

    exit_code = 2


class DegeneratePointError(LayerFieldsError):
    """Point coincides with the UV projection center."""

    exit_code = 2


class ExportError(LayerFieldsError):
    """Baking/export produced an unusable layer or mesh."""

    exit_code = 4

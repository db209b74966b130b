"""Typed errors shared across the toolkit.

Every error carries an ``exit_code`` used by the CLI: 2 for configuration
problems, 3 for data problems (missing/degenerate inputs, shape mismatches),
4 for numeric failures during optimization.
"""


class ForgekitError(Exception):
    exit_code = 1


class ConfigError(ForgekitError):
    """Invalid configuration or parameter value."""

    exit_code = 2


class DomainError(ConfigError):
    """Argument outside the mathematical domain of an operation."""


class DataError(ForgekitError):
    """Problem with input data (files, records, geometry)."""

    exit_code = 3


class DimensionError(DataError):
    """Arrays with incompatible shapes."""


class DegenerateGeometryError(DataError):
    """Fewer than 3 points, or all points collinear."""


class EmptyInputError(DataError):
    """An input collection that must be non-empty is empty."""


class UndefinedMetricError(DataError):
    """Metric not defined for this input (e.g. single-class AUC)."""


class ContractViolationError(DataError):
    """A caller passed an argument violating a documented precondition."""


class NumericError(ForgekitError):
    """Numeric failure (NaN/Inf) during computation."""

    exit_code = 4

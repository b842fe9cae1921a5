"""Exception hierarchy shared by all modules.

Each class carries the CLI exit code used when the error escapes a command:
2 for rejected configuration/inputs, 3 for broken or unusable data files,
4 for numeric failures.
"""


class MilkitError(Exception):
    exit_code = 1


class ValidationError(MilkitError):
    """Caller passed something the contract rejects."""

    exit_code = 2


class DataError(MilkitError):
    """A data file or dataset is missing, malformed, or unusable."""

    exit_code = 3


class NumericError(MilkitError):
    """A computation produced or received non-finite values."""

    exit_code = 4


class DimensionError(ValidationError):
    """Operand shapes are incompatible."""


class EmptyBagError(ValidationError):
    """A bag with zero instances was supplied."""


class GraphError(ValidationError):
    """A computation-graph contract was violated (e.g. non-scalar loss)."""


class UndefinedMetricError(DataError):
    """The requested metric is undefined on this input (e.g. single-class AUROC)."""

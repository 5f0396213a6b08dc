"""Exception hierarchy shared by every module in the package."""


class ColDeltaError(Exception):
    """Base class for all package errors."""


class DimensionError(ColDeltaError, ValueError):
    pass


class NumericError(ColDeltaError, ArithmeticError):
    pass


class DivisibilityError(DimensionError):
    pass


class LayoutError(ColDeltaError, ValueError):
    pass


class ParameterError(ColDeltaError, ValueError):
    pass


class StateError(ColDeltaError, RuntimeError):
    pass


class ConfigError(ColDeltaError, ValueError):
    pass


class UndefinedStatisticError(ColDeltaError, ArithmeticError):
    pass


class SparseIndexError(ColDeltaError, IndexError):
    pass


class FormatError(ColDeltaError, ValueError):
    """Malformed binary tensor / mask file."""

"""Exception hierarchy shared by all modules."""


class RemlError(Exception):
    """Base class for every error raised by the package."""


class InfeasibleParams(RemlError, ValueError):
    """Parameters lie outside the feasible region of the covariance model."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NotPositiveDefinite(RemlError, ArithmeticError):
    """A matrix that must be SPD failed its Cholesky factorization."""


class DimensionMismatch(RemlError, ValueError):
    pass


class IndexOutOfRange(RemlError, IndexError):
    pass


class SingularCoefficientMatrix(RemlError, ArithmeticError):
    """The mixed-model-equations coefficient matrix could not be factorized."""

    def __init__(self, message, block):
        super().__init__(message)
        self.block = block


class SingularCurvature(RemlError, ArithmeticError):
    pass


class InvalidStep(RemlError, ValueError):
    pass


class StatisticalFloor(RemlError, ValueError):
    """Too few Monte Carlo replicates for the requested statistic."""


class DataError(RemlError, ValueError):
    """Problems found while ingesting a dataset."""


class MissingColumn(DataError):
    pass


class NonNumericValue(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class RankDeficientX(DataError):
    pass


class ConfigError(RemlError, ValueError):
    pass

"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for usage errors, 3 for data errors and 4 for numerical failures.
"""


class RTBMError(Exception):
    exit_code = 4

    @property
    def kind(self) -> str:
        return type(self).__name__


# usage / shape problems
class DimensionMismatch(RTBMError, ValueError):
    exit_code = 3


class LengthMismatch(DimensionMismatch):
    pass


class MixedVisibleDims(DimensionMismatch):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class UnsupportedDim(RTBMError, ValueError):
    exit_code = 3


class InvalidDerivative(RTBMError, ValueError):
    exit_code = 2


class InvalidConfig(RTBMError, ValueError):
    exit_code = 2


# matrix conditions
class NonSymmetricOmega(RTBMError, ValueError):
    pass


class NonPositiveDefiniteOmega(RTBMError, ValueError):
    pass


class NonPositiveDefiniteSchur(RTBMError, ValueError):
    pass


class InvalidParams(RTBMError, ValueError):
    pass


class NonDiagonalT(RTBMError, ValueError):
    pass


class DegenerateA(RTBMError):
    pass


# numerics
class TruncationOverflow(RTBMError):
    pass


class ThetaZeroEncountered(RTBMError, ArithmeticError):
    pass


class NoFeasibleCandidate(RTBMError):
    pass


class Diverged(RTBMError):
    pass


class LineSearchFailed(RTBMError):
    pass


# data
class DataError(RTBMError, ValueError):
    exit_code = 3


class EmptyData(DataError):
    pass


class NonFiniteSample(DataError):
    pass


class NonFiniteInput(DataError):
    pass


class DegenerateData(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        super().__init__(message)
        self.row = row
        self.col = col

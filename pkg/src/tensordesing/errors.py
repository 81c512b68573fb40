"""Exception hierarchy shared across the package."""


class TensorDesingError(Exception):
    """Base class for all package errors."""


class ModeIndexError(TensorDesingError, IndexError):
    """A mode index is outside ``0 <= k < d``."""


class DimensionError(TensorDesingError, ValueError):
    """Array shapes do not conform."""


class RankError(TensorDesingError, ValueError):
    """A rank parameter is infeasible (for example ``r_k > n_k``)."""


class BasePointError(TensorDesingError, ValueError):
    """Tangent vectors attached to different base points were mixed."""


class PreconditionError(TensorDesingError, ValueError):
    """An operation was called outside its domain of validity."""


class DegenerateDirectionError(TensorDesingError, ArithmeticError):
    """The exact line search denominator vanished."""


class InconsistencyError(TensorDesingError, ValueError):
    """Input data is internally inconsistent.

    Attributes
    ----------
    mode : int or None
        The failing mode index if one can be identified.
    residual : float or None
        The measured residual that exceeded the tolerance.
    """

    def __init__(self, message, mode=None, residual=None):
        super().__init__(message)
        self.mode = mode
        self.residual = residual


class DataError(TensorDesingError, ValueError):
    """Malformed input files or datasets."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

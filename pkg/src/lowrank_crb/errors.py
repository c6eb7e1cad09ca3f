class CrbError(Exception):
    """Base class for errors raised by lowrank_crb."""


class DimensionMismatch(CrbError, ValueError):
    pass


class SingularCovariance(CrbError):
    """The compressed noise covariance sigma^2 * Phi Phi^T is not invertible."""


class SingularInformation(CrbError):
    """A Fisher information matrix (or a block of it) cannot be inverted."""

    def __init__(self, message, rank=None, min_singular_value=None):
        super().__init__(message)
        self.rank = rank
        self.min_singular_value = min_singular_value

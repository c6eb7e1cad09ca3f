"""Shared numerical-rank policy.

Every singularity decision in the package goes through this module so that a
single tolerance rule applies: a singular value counts as zero when it is below
``max(shape) * eps * scale``, where ``scale`` is the largest singular value of
the matrix unless a reference scale is supplied.
"""

import numpy as np

EPS = np.finfo(float).eps


def default_rtol(shape) -> float:
    return max(shape) * EPS if len(shape) else EPS


def hermitian_part(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.conj().T)


def singular_values(matrix) -> np.ndarray:
    matrix = np.asarray(matrix)
    if matrix.size == 0:
        return np.zeros(0)
    return np.linalg.svd(matrix, compute_uv=False)


def numerical_rank(matrix, tol=None, scale=None) -> int:
    """Count singular values above ``tol * scale``.

    Args:
        matrix: real or complex 2-D array.
        tol: relative tolerance; defaults to ``max(shape) * eps``.
        scale: reference magnitude. Defaults to the largest singular value of
            ``matrix``. Pass the norm of a parent matrix when ``matrix`` is the
            result of a cancellation (a Schur complement, say) and its own
            largest singular value is pure round-off.
    """
    matrix = np.atleast_2d(np.asarray(matrix))
    if matrix.size == 0:
        return 0
    if tol is None:
        tol = default_rtol(matrix.shape)
    if tol < 0:
        raise ValueError("tol must be non-negative")
    s = singular_values(matrix)
    if scale is None:
        scale = s[0]
    return int(np.count_nonzero(s > tol * scale))


def equilibrate(matrix: np.ndarray):
    """Symmetric Jacobi scaling S M S with S = diag(1/sqrt(|diag M|)).

    Rank is invariant under the scaling; it removes the spread between the
    amplitude and angle entries of a FIM, which otherwise dominates its
    condition number. Zero diagonal entries are left unscaled.
    """
    diag = np.abs(np.real(np.diag(matrix)))
    s = np.ones_like(diag)
    nz = diag > 0
    s[nz] = 1.0 / np.sqrt(diag[nz])
    return matrix * np.outer(s, s), s

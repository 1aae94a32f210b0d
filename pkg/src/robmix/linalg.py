"""Small dense symmetric-matrix kernel.

Symmetric matrices are plain ``(d, d)`` float arrays throughout the package;
the helpers here validate them, diagonalise them with cyclic Jacobi rotations
and project them onto the positive definite cone.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _kernels
from .errors import InvalidInputError

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
PSD_REL_FLOOR = 1e-8


class EigenPairs(NamedTuple):
    """Eigenvalues in decreasing order and the matching orthonormal columns."""

    values: NDArray[np.float64]
    vectors: NDArray[np.float64]


def as_symmetric(M: ArrayLike, name: str = "matrix") -> NDArray[np.float64]:
    """Return ``M`` as a finite, exactly symmetric float array.

    Small floating-point asymmetries are averaged out; anything larger than
    1e-8 relative to the matrix norm is rejected.
    """
    A = np.array(M, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise InvalidInputError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    asym = np.abs(A - A.T).max()
    if asym > 1e-8 * max(1.0, np.abs(A).max()):
        raise InvalidInputError(f"{name} is not symmetric (max |A - A.T| = {asym:.3g})")
    return 0.5 * (A + A.T)


def sym_eigen(M: ArrayLike) -> EigenPairs:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps over all (p, q) pairs until the off-diagonal Frobenius mass drops
    below ``1e-12 * ||M||_F`` or 100 sweeps have run.

    Parameters
    ----------
    M : array_like, shape (d, d)
        Symmetric matrix with finite entries.

    Returns
    -------
    EigenPairs
        ``values`` sorted in decreasing order and ``vectors`` whose columns are
        the corresponding orthonormal eigenvectors, so that
        ``M = vectors @ diag(values) @ vectors.T``.
    """
    A = as_symmetric(M)
    V = _kernels.jacobi_sweeps(A, JACOBI_TOL * np.linalg.norm(A), JACOBI_MAX_SWEEPS)
    values = np.diag(A).copy()
    order = np.argsort(-values, kind="stable")
    return EigenPairs(values[order], V[:, order])


def reconstruct(values: ArrayLike, vectors: ArrayLike) -> NDArray[np.float64]:
    """Rebuild ``sum_k values[k] v_k v_k^T`` as an exactly symmetric matrix."""
    values = np.asarray(values, dtype=float)
    vectors = np.asarray(vectors, dtype=float)
    out = (vectors * values) @ vectors.T
    return 0.5 * (out + out.T)


def frobenius_distance(A: ArrayLike, B: ArrayLike) -> float:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise InvalidInputError(f"shape mismatch: {A.shape} vs {B.shape}")
    return float(np.sqrt(np.sum((A - B) ** 2)))


def default_floor(values: ArrayLike) -> float:
    return PSD_REL_FLOOR * max(1.0, float(np.max(values)))


def psd_project(M: ArrayLike, floor: float | None = None) -> NDArray[np.float64]:
    """Clip the spectrum of ``M`` from below at ``floor``, keeping its eigenvectors.

    The default floor is ``1e-8 * max(1, largest eigenvalue)``.
    """
    values, vectors = sym_eigen(M)
    if floor is None:
        floor = default_floor(values)
    if not floor > 0:
        raise InvalidInputError("floor must be positive")
    if values[-1] >= floor:
        return as_symmetric(M)
    return reconstruct(np.maximum(values, floor), vectors)

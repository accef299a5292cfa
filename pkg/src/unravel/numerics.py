"""Dense complex-matrix kernels.

Thin, checked wrappers around numpy/scipy LAPACK routines. Matrices are plain
``numpy.ndarray`` objects of complex dtype stored in row-major (C) order.
"""

from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

ATOL = 1e-10


class LinAlgError(ValueError):
    pass


class HermEig(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


class SVDResult(NamedTuple):
    U: np.ndarray
    singular_values: np.ndarray
    Vh: np.ndarray


def as_cmatrix(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=complex)
    if a.ndim != 2:
        raise LinAlgError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise LinAlgError("matrix has non-finite entries")
    return a


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def matmul(a, b) -> np.ndarray:
    a, b = as_cmatrix(a), as_cmatrix(b)
    if a.shape[1] != b.shape[0]:
        raise LinAlgError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def is_hermitian(a, atol: float = ATOL) -> bool:
    a = np.asarray(a)
    return a.shape[0] == a.shape[1] and np.allclose(a, dagger(a), atol=atol, rtol=0)


def is_unitary(a, atol: float = ATOL) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    return np.allclose(dagger(a) @ a, np.eye(a.shape[0]), atol=atol, rtol=0)


def herm_eig(a) -> HermEig:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    a = as_cmatrix(a)
    if a.shape[0] != a.shape[1]:
        raise LinAlgError("herm_eig needs a square matrix")
    if not is_hermitian(a):
        raise LinAlgError("matrix is not Hermitian")
    try:
        w, v = np.linalg.eigh(0.5 * (a + dagger(a)))
    except np.linalg.LinAlgError as exc:
        raise LinAlgError(f"eigh failed to converge: {exc}") from exc
    return HermEig(w, v)


def svd(a) -> SVDResult:
    a = as_cmatrix(a)
    if a.size == 0:
        raise LinAlgError("svd of an empty matrix")
    try:
        u, s, vh = sla.svd(a, full_matrices=False, lapack_driver="gesdd")
    except (np.linalg.LinAlgError, ValueError):
        # gesdd occasionally fails on ill-conditioned input; gesvd is slower but robust
        try:
            u, s, vh = sla.svd(a, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise LinAlgError(f"svd failed to converge: {exc}") from exc
    return SVDResult(u, s, vh)


def qr_unitary(a) -> np.ndarray:
    """Q factor of ``a`` with the phases of diag(R) moved into Q.

    With this convention R has a positive real diagonal, which makes the map
    Ginibre -> Q produce Haar-distributed unitaries.
    """
    a = as_cmatrix(a)
    if a.shape[0] != a.shape[1]:
        raise LinAlgError("qr_unitary needs a square matrix")
    q, r = np.linalg.qr(a)
    d = np.diag(r)
    scale = np.max(np.abs(d)) if d.size else 0.0
    if scale == 0.0 or np.min(np.abs(d)) <= 1e-12 * max(scale, 1.0):
        raise LinAlgError("rank-deficient input to qr_unitary")
    return q * (d / np.abs(d))[np.newaxis, :]

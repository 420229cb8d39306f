"""Dense symmetric linear algebra and subspace distances.

All covariance estimators use the 1/n divisor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

EIGEN_TOL = 1e-12


class LinalgError(ValueError):
    """Raised on invalid shapes, rank failures or non-finite input."""


@dataclass(frozen=True)
class EigenSystem:
    """Leading eigenpairs of a symmetric matrix in descending order.

    Attributes
    ----------
    values : (d,) ndarray
        Eigenvalues, non-increasing.
    vectors : (p, d) ndarray
        Orthonormal eigenvectors; in every column the entry of largest
        absolute value is positive.
    """

    values: np.ndarray
    vectors: np.ndarray

    @property
    def d(self) -> int:
        return self.values.shape[0]


def as_symmetric(A, name: str = "matrix") -> np.ndarray:
    """Return ``(A + A.T) / 2`` as a float array after shape/finiteness checks."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise LinalgError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise LinalgError(f"{name} has non-finite entries")
    return (A + A.T) / 2.0


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so that each column's largest-magnitude entry is positive.

    Ties go to the lowest row index (``argmax`` picks the first maximum).
    """
    V = np.array(V, dtype=float, copy=True)
    if V.ndim == 1:
        return V if V.size == 0 or V[np.argmax(np.abs(V))] >= 0 else -V
    if V.shape[1] == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def sym_eigen(S, d: int | None = None) -> EigenSystem:
    """Top-``d`` eigenpairs of a symmetric matrix.

    Backed by LAPACK's tridiagonal solvers (``scipy.linalg.eigh``); only the
    requested part of the spectrum is computed when ``d`` is small.
    """
    S = as_symmetric(S)
    p = S.shape[0]
    if d is None:
        d = p
    if not 1 <= d <= p:
        raise LinalgError(f"d must lie in [1, {p}], got {d}")
    try:
        if d == p:
            w, V = scipy.linalg.eigh(S)
        else:
            w, V = scipy.linalg.eigh(S, subset_by_index=[p - d, p - 1])
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise LinalgError(f"eigen solver did not converge for a {p}x{p} matrix") from exc
    # LAPACK returns ascending order; reversing keeps ties in a stable order
    w = w[::-1].copy()
    V = V[:, ::-1]
    return EigenSystem(values=w, vectors=fix_signs(V))


def _check_rows(A: np.ndarray, B: np.ndarray) -> None:
    if A.ndim != 2 or B.ndim != 2:
        raise LinalgError("bases must be 2-d arrays")
    if A.shape[0] != B.shape[0]:
        raise LinalgError(f"row dimensions differ: {A.shape[0]} vs {B.shape[0]}")


def projection_distance(A, B) -> float:
    """Frobenius distance ``||A A^T - B B^T||_F`` between two projections."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    _check_rows(A, B)
    return float(np.linalg.norm(A @ A.T - B @ B.T))


def principal_sines(A, B) -> np.ndarray:
    """Sines of the principal angles between ``span(A)`` and ``span(B)``.

    Computed as the singular values of ``(I - A A^T) B``, which keeps full
    relative accuracy for small angles. Returned in ascending order, which
    matches cosines in descending order.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    _check_rows(A, B)
    if A.shape[1] != B.shape[1]:
        raise LinalgError(f"column counts differ: {A.shape[1]} vs {B.shape[1]}")
    R = B - A @ (A.T @ B)
    s = np.linalg.svd(R, compute_uv=False)
    return np.clip(np.sort(s), 0.0, 1.0)


def orthonormalize(V) -> np.ndarray:
    """Orthonormal basis of ``span(V)`` by Gram-Schmidt in column order.

    Two passes of modified Gram-Schmidt; the column sign convention of
    :func:`fix_signs` is applied to the result.
    """
    V = np.array(V, dtype=float, copy=True)
    if V.ndim == 1:
        V = V[:, None]
    if not np.all(np.isfinite(V)):
        raise LinalgError("matrix has non-finite entries")
    p, k = V.shape
    if k > p:
        raise LinalgError(f"cannot orthonormalize {k} columns in dimension {p}")
    s = np.linalg.svd(V, compute_uv=False)
    scale = s[0] if s.size else 0.0
    Q = np.zeros_like(V)
    for j in range(k):
        q = V[:, j].copy()
        for _ in range(2):
            for i in range(j):
                q -= (Q[:, i] @ q) * Q[:, i]
        nrm = np.linalg.norm(q)
        if scale == 0.0 or nrm <= 1e-10 * scale:
            raise LinalgError(f"column {j} is numerically dependent on the preceding columns")
        Q[:, j] = q / nrm
    if s[-1] <= 1e-10 * scale:
        raise LinalgError(f"column {k - 1} is numerically dependent on the preceding columns")
    return fix_signs(Q)


def _center(X: np.ndarray) -> np.ndarray:
    return X - X.mean(axis=0)


def sample_covariance(X) -> np.ndarray:
    """Covariance of the rows of ``X`` with divisor n."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < 2:
        raise LinalgError(f"need at least 2 observations, got {n}")
    Xc = _center(X)
    S = Xc.T @ Xc / n
    return (S + S.T) / 2.0


def cross_covariance(X, Y) -> np.ndarray:
    """Cross-covariance ``(1/n) Xc^T Yc`` with both blocks centered."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise LinalgError(f"row counts differ: {X.shape[0]} vs {Y.shape[0]}")
    n = X.shape[0]
    if n < 2:
        raise LinalgError(f"need at least 2 observations, got {n}")
    return _center(X).T @ _center(Y) / n

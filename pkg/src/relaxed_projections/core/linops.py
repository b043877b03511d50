from collections.abc import Sequence
import logging

import numpy as np
from scipy import linalg

from relaxed_projections.core.errors import InputError

DEFAULT_RANK_RTOL = 1e-10
"""float: Relative rank threshold, scaled by the largest column norm (or singular value)."""

POWER_MAX_ITER = 10_000


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """
    Convert `x` to a finite 1-D float64 array, optionally checking its dimension.

    Raises:
        InputError: If `x` is not one-dimensional, has the wrong length, or
            contains NaN/Inf.
    """
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InputError(f"expected a non-empty vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise InputError(f"dimension mismatch: expected {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise InputError("vector has non-finite entries")
    return v


def as_matrix(M, cols: int | None = None) -> np.ndarray:
    """Convert `M` to a finite 2-D float64 array, optionally checking the column count."""
    A = np.asarray(M, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2:
        raise InputError(f"expected a matrix, got shape {A.shape}")
    if cols is not None and A.shape[1] != cols:
        raise InputError(f"matrix has {A.shape[1]} columns, expected {cols}")
    if not np.all(np.isfinite(A)):
        raise InputError("matrix has non-finite entries")
    return A


def orthonormalize(vectors: Sequence, tol: float = DEFAULT_RANK_RTOL, dim: int | None = None) -> np.ndarray:
    """
    Orthonormal basis of span(vectors) by Householder QR with column pivoting.

    Args:
        vectors (Sequence): Vectors of a common dimension d. May be empty, in
            which case `dim` must be given.
        tol (float): Relative rank threshold; diagonal entries of R below
            tol * (largest column norm) are treated as zero.
        dim (int | None): Ambient dimension, required for an empty list.
    Returns:
        np.ndarray: d x k matrix with orthonormal columns, k the numerical rank.
    Raises:
        InputError: On dimension mismatch, tol <= 0, or an empty list without `dim`.
    """
    if tol <= 0:
        raise InputError(f"tol must be positive, got {tol}")
    if len(vectors) == 0:
        if dim is None:
            raise InputError("dimension of an empty spanning set must be given")
        return np.zeros((dim, 0))

    dims = {np.asarray(v).shape for v in vectors}
    if len(dims) != 1:
        raise InputError(f"vectors have mismatched shapes {sorted(dims)}")
    A = np.column_stack([as_vector(v) for v in vectors])
    if dim is not None and A.shape[0] != dim:
        raise InputError(f"dimension mismatch: expected {dim}, got {A.shape[0]}")
    return orthonormal_columns(A, tol)


def orthonormal_columns(A: np.ndarray, tol: float = DEFAULT_RANK_RTOL) -> np.ndarray:
    """Orthonormal basis of the column space of `A` (see `orthonormalize`)."""
    d = A.shape[0]
    if A.shape[1] == 0:
        return np.zeros((d, 0))
    scale = np.max(np.linalg.norm(A, axis=0))
    if scale == 0.0:
        return np.zeros((d, 0))

    Q, R, _ = linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    k = int(np.sum(diag > tol * scale))
    if k == 0:
        return np.zeros((d, 0))
    Q = Q[:, :k]

    # one re-orthogonalization pass keeps Q^T Q = I at machine precision
    Q, _ = np.linalg.qr(Q)
    return Q


def least_squares(M, b) -> tuple[np.ndarray, float]:
    """
    Minimum-norm least-squares solution of M x = b.

    Returns:
        tuple[np.ndarray, float]: The solution M^+ b and the residual norm ||M x - b||.
    Raises:
        InputError: If b does not match the row count of M.
    """
    A = as_matrix(M)
    rhs = np.asarray(b, dtype=np.float64).reshape(-1)
    if rhs.shape[0] != A.shape[0]:
        raise InputError(f"right-hand side has {rhs.shape[0]} entries, matrix has {A.shape[0]} rows")
    if A.shape[0] == 0:
        return np.zeros(A.shape[1]), 0.0

    solution, *_ = linalg.lstsq(A, rhs, lapack_driver="gelsd")
    residual = float(np.linalg.norm(A @ solution - rhs))
    return solution, residual


def operator_norm(M, tol: float = 1e-12, method: str = "svd", seed: int = 0) -> float:
    """
    Spectral norm (largest singular value) of M.

    Args:
        M: Matrix.
        tol (float): Relative accuracy of the power iteration (ignored by "svd").
        method (str): "svd" for a full singular value computation, "power" for
            power iteration on M^T M.
        seed (int): Seed of the power-iteration start vector.
    """
    A = as_matrix(M)
    if A.size == 0:
        return 0.0
    if method == "svd":
        return float(linalg.svdvals(A)[0])
    if method != "power":
        raise InputError(f"unknown operator norm method {method!r}")
    if tol <= 0:
        raise InputError(f"tol must be positive, got {tol}")

    G = A.T @ A
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(G.shape[0])
    x /= np.linalg.norm(x)
    sigma2 = 0.0
    for _ in range(POWER_MAX_ITER):
        y = G @ x
        y_norm = np.linalg.norm(y)
        if y_norm == 0.0:
            return 0.0
        # Rayleigh quotient estimates the top eigenvalue of M^T M
        sigma2_new = float(x @ y)
        x = y / y_norm
        if abs(sigma2_new - sigma2) <= tol * abs(sigma2_new):
            sigma2 = sigma2_new
            break
        sigma2 = sigma2_new
    else:
        logging.warning(f"operator_norm: power iteration did not reach tol={tol}")
    return float(np.sqrt(max(sigma2, 0.0)))


def nullspace(M, tol: float = DEFAULT_RANK_RTOL, cols: int | None = None) -> np.ndarray:
    """
    Orthonormal basis of {x : M x = 0}.

    Args:
        M: Matrix with q columns.
        tol (float): Singular values below tol * (largest singular value) are
            treated as zero.
        cols (int | None): Column count, needed when M has no rows.
    Returns:
        np.ndarray: q x k matrix with orthonormal columns.
    """
    if tol <= 0:
        raise InputError(f"tol must be positive, got {tol}")
    A = np.asarray(M, dtype=np.float64)
    if A.ndim == 2 and A.shape[0] == 0:
        return np.eye(A.shape[1] if cols is None else cols)
    A = as_matrix(A, cols)
    return linalg.null_space(A, rcond=tol)

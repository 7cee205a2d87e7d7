"""Small dense linear algebra: truncated SVD and a finite-difference oracle.

The SVD here targets tiny matrices (n, d <= a few hundred) where numerical
robustness matters more than speed, so it goes through an eigendecomposition
of the smaller Gram matrix rather than an iterative solver.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class RankError(ValueError):
    """Requested rank exceeds what the matrix supports."""


_SIGN_TOL = 1e-12


def _fix_sign(v: np.ndarray) -> float:
    """Return +-1 so that the first nonzero entry of sign*v is non-negative."""
    nz = np.nonzero(np.abs(v) > _SIGN_TOL)[0]
    if nz.size and v[nz[0]] < 0:
        return -1.0
    return 1.0


def truncated_svd(z, k: int) -> np.ndarray:
    """Top-k rows of Sigma @ V^T for Z = U Sigma V^T.

    Rows are the principal right singular vectors scaled by their singular
    values, ordered by non-increasing singular value.  The sign of each row
    is fixed so the first nonzero entry of the underlying singular vector is
    non-negative.  An all-zero matrix yields k x d zeros.

    Parameters
    ----------
    z : array_like, shape (n, d)
    k : int, 1 <= k <= min(n, d)

    Returns
    -------
    ndarray, shape (k, d)
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise RankError(f"expected a 2-d matrix, got shape {z.shape}")
    n, d = z.shape
    if n < 1:
        raise RankError("matrix must have at least one row")
    if not 1 <= k <= min(n, d):
        raise RankError(f"k={k} outside [1, min(n,d)={min(n, d)}] for shape {z.shape}")

    # Eigendecompose the smaller Gram matrix; n and d are tiny, so the
    # O(min(n,d)^3) cost is irrelevant and eigh is the stable route.
    if n >= d:
        evals, evecs = np.linalg.eigh(z.T @ z)
        order = np.argsort(evals)[::-1][:k]
        scores = np.empty((k, d))
        for row, idx in enumerate(order):
            sigma = np.sqrt(max(evals[idx], 0.0))
            v = evecs[:, idx] * _fix_sign(evecs[:, idx])
            scores[row] = sigma * v
    else:
        evals, evecs = np.linalg.eigh(z @ z.T)
        order = np.argsort(evals)[::-1][:k]
        scores = np.empty((k, d))
        for row, idx in enumerate(order):
            sigma = np.sqrt(max(evals[idx], 0.0))
            if sigma > _SIGN_TOL:
                v = z.T @ evecs[:, idx] / sigma
            else:
                v = np.zeros(d)
            v = v * _fix_sign(v)
            scores[row] = sigma * v
    return scores


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function, one entry per coordinate.

    The workhorse oracle for every gradient check in the test suite.  It never
    touches the reverse-mode machinery, which is the point.
    """
    x = np.asarray(x, dtype=np.float64)
    if h <= 0:
        raise ValueError("step h must be positive")
    grad = np.empty_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        f_plus = float(f(x))
        flat_x[i] = orig - h
        f_minus = float(f(x))
        flat_x[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ArithmeticError(f"non-finite evaluation at coordinate {i}")
        flat_g[i] = (f_plus - f_minus) / (2.0 * h)
    return grad

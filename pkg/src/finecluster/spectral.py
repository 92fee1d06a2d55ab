"""Symmetric eigenproblems, Ky-Fan norms and weighted moments."""
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from . import _backend

DENSE_MAX_DIM = 64
PSD_CLAMP = 1e-9


class EigenSolverError(RuntimeError):
    """Iterative eigensolver failed to converge."""

    def __init__(self, message, residual=np.inf):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


def check_symmetric(M, rtol=1e-12):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    gap = np.abs(M - M.T)
    if np.any(gap > rtol * np.maximum(1.0, np.abs(M))):
        raise ValueError("matrix is not symmetric")
    return M


def _canonical_signs(V):
    # flip each eigenvector so its largest-magnitude entry is positive
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _clamp_psd(vals):
    top = vals.max() if vals.size else 0.0
    if top > 0:
        vals = np.where((vals < 0) & (vals >= -PSD_CLAMP * top), 0.0, vals)
    return vals


def top_k_eigs(M, k, tol=1e-10, max_iter=None):
    """Largest ``k`` eigenpairs of a symmetric matrix.

    Dense ``eigh`` up to dimension 64, implicitly restarted Lanczos
    (ARPACK) above that.

    Returns
    -------
    vals : ndarray, shape (k,)
        Eigenvalues in descending order; tiny negative values produced by
        round-off on PSD input are clamped to zero.
    vecs : ndarray, shape (d, k)
        Orthonormal eigenvectors as columns, sign-normalised.
    """
    M = check_symmetric(M)
    d = M.shape[0]
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    M = (M + M.T) / 2.0
    if d <= DENSE_MAX_DIM or k >= d - 1:
        vals, vecs = np.linalg.eigh(M)
        vals, vecs = vals[::-1][:k], vecs[:, ::-1][:, :k]
    else:
        v0 = np.ones(d) / np.sqrt(d)
        try:
            vals, vecs = eigsh(M, k=k, which="LA", tol=tol, v0=v0, maxiter=max_iter)
        except ArpackNoConvergence as err:
            res = np.inf
            if err.eigenvalues is not None and len(err.eigenvalues):
                R = M @ err.eigenvectors - err.eigenvectors * err.eigenvalues
                res = float(np.max(np.linalg.norm(R, axis=0)))
            raise EigenSolverError("Lanczos iteration did not converge", res) from err
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
    vals = _clamp_psd(vals)
    return vals, _canonical_signs(vecs)


def eigvalsh_desc(M):
    vals = np.linalg.eigvalsh((M + M.T) / 2.0)[::-1]
    return _clamp_psd(vals)


def kyfan_norm(M, k):
    """Sum of the ``k`` largest singular values; ``k`` above the dimension is capped."""
    M = check_symmetric(M)
    d = M.shape[0]
    if k < 1:
        raise ValueError("k must be positive")
    k = min(int(k), d)
    if d <= DENSE_MAX_DIM or k >= d - 1:
        svals = np.sort(np.abs(eigvalsh_desc(M)))[::-1]
        return float(svals[:k].sum())
    try:
        vals = eigsh(M, k=k, which="LM", return_eigenvectors=False, v0=np.ones(d) / np.sqrt(d))
    except ArpackNoConvergence as err:
        raise EigenSolverError("Lanczos iteration did not converge") from err
    return float(np.abs(vals).sum())


@dataclass
class WeightedMoments:
    total_weight: float
    mean: np.ndarray
    center: np.ndarray
    second_moment: np.ndarray
    degenerate: bool = False


def weighted_moments(points, w, center):
    """Weighted mean and the unnormalised second moment about ``center``.

    The second moment is ``sum_x w_x (x - center)(x - center)^T``, summed in
    index order with compensation so the result does not depend on
    threading.
    """
    X = np.asarray(points, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (X.shape[0],):
        raise ValueError("weight vector length must match the number of points")
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError("weights must lie in [0, 1]")
    center = np.asarray(center, dtype=np.float64)
    Z = np.ascontiguousarray(X - center)
    total = float(np.sum(w))
    second = _backend.weighted_scatter(Z, np.ascontiguousarray(w))
    if total == 0.0:
        return WeightedMoments(0.0, np.full(X.shape[1], np.nan), center, second, degenerate=True)
    mean = center + (w @ Z) / total
    return WeightedMoments(total, mean, center, second)


def covariance(X):
    """Population covariance (1/m normalisation)."""
    X = np.asarray(X, dtype=np.float64)
    Z = np.ascontiguousarray(X - X.mean(axis=0))
    return _backend.weighted_scatter(Z, np.ones(X.shape[0])) / X.shape[0]


def max_stdev(X):
    """Square root of the operator norm of the covariance; 0 for fewer than two points."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        return 0.0
    return float(np.sqrt(max(eigvalsh_desc(covariance(X))[0], 0.0)))

"""Numpy implementations of the compiled kernels.

Used when the Cython extension is not built, or when
``FINECLUSTER_BACKEND=python`` is set.
"""
import numpy as np

_CHUNK = 64


def weighted_scatter(Z, w):
    """Sum of w_i * z_i z_i^T, chunked in index order with Neumaier compensation."""
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    d = Z.shape[1]
    total = np.zeros((d, d))
    comp = np.zeros((d, d))
    nz = np.flatnonzero(w)
    for start in range(0, nz.size, _CHUNK):
        idx = nz[start:start + _CHUNK]
        zc = Z[idx]
        term = np.einsum("i,ij,ik->jk", w[idx], zc, zc, optimize=False)
        t = total + term
        big = np.abs(total) >= np.abs(term)
        comp += np.where(big, (total - t) + term, (term - t) + total)
        total = t
    out = total + comp
    return (out + out.T) / 2.0


def _sq_dists(A, B):
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff, optimize=False)


def ball_counts(X, radii):
    """counts[r, i] = #{j : ||x_j - x_i|| <= radii[r]} (self included)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    r2 = np.asarray(radii, dtype=np.float64) ** 2
    n = X.shape[0]
    counts = np.zeros((r2.size, n), dtype=np.int64)
    step = max(1, min(_CHUNK, 4_000_000 // max(1, n * X.shape[1])))
    for start in range(0, n, step):
        D = np.sort(_sq_dists(X[start:start + step], X), axis=1)
        for q, rr in enumerate(r2):
            counts[q, start:start + step] = (D <= rr).sum(axis=1)
    return counts


def nearest_center(X, centers):
    """Index of the nearest center per row; ties go to the lowest index."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    n = X.shape[0]
    labels = np.empty(n, dtype=np.int64)
    step = max(1, min(1024, 4_000_000 // max(1, centers.shape[0] * X.shape[1])))
    for start in range(0, n, step):
        labels[start:start + step] = np.argmin(_sq_dists(X[start:start + step], centers), axis=1)
    return labels


def projected_energy(Z, U):
    """g_i = sum_j (u_j . z_i)^2 for the columns u_j of U."""
    P = np.asarray(Z, dtype=np.float64) @ np.asarray(U, dtype=np.float64)
    return np.einsum("ij,ij->i", P, P)

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Every function here has a numpy twin in ``_kernels_py`` with the same
signature; ``_backend`` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def weighted_scatter(const double[:, ::1] Z, const double[::1] w):
    """Sum of w_i * z_i z_i^T in index order with Neumaier compensation."""
    cdef Py_ssize_t n = Z.shape[0], d = Z.shape[1]
    cdef Py_ssize_t i, a, b
    cdef double wi, term, s, t
    out = np.zeros((d, d), dtype=np.float64)
    comp = np.zeros((d, d), dtype=np.float64)
    cdef double[:, ::1] S = out
    cdef double[:, ::1] R = comp
    for i in range(n):
        wi = w[i]
        if wi == 0.0:
            continue
        for a in range(d):
            if Z[i, a] == 0.0:
                continue
            for b in range(a, d):
                term = wi * Z[i, a] * Z[i, b]
                s = S[a, b]
                t = s + term
                if fabs(s) >= fabs(term):
                    R[a, b] += (s - t) + term
                else:
                    R[a, b] += (term - t) + s
                S[a, b] = t
    for a in range(d):
        for b in range(a, d):
            S[a, b] += R[a, b]
            S[b, a] = S[a, b]
    return out


cdef Py_ssize_t _upper_count(double* sorted_vals, Py_ssize_t n, double x) nogil:
    # number of entries <= x
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if sorted_vals[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def ball_counts(const double[:, ::1] X, radii):
    """counts[r, i] = #{j : ||x_j - x_i|| <= radii[r]} (self included)."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef double[::1] r2 = np.ascontiguousarray(np.asarray(radii, dtype=np.float64) ** 2)
    cdef Py_ssize_t nr = r2.shape[0]
    counts = np.zeros((nr, n), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] C = counts
    cdef double[::1] row = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i, j, k, q
    cdef double acc, diff
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(d):
                diff = X[j, k] - X[i, k]
                acc += diff * diff
            row[j] = acc
        np.asarray(row).sort(kind="quicksort")
        for q in range(nr):
            C[q, i] = _upper_count(&row[0], n, r2[q])
    return counts


def nearest_center(const double[:, ::1] X, const double[:, ::1] centers):
    """Index of the nearest center per row; ties go to the lowest index."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], m = centers.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] L = labels
    cdef Py_ssize_t i, j, k, best
    cdef double acc, diff, best_d
    for i in range(n):
        best = 0
        best_d = -1.0
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = X[i, k] - centers[j, k]
                acc += diff * diff
            if best_d < 0.0 or acc < best_d:
                best_d = acc
                best = j
        L[i] = best
    return labels


def projected_energy(const double[:, ::1] Z, const double[:, ::1] U):
    """g_i = sum_j (u_j . z_i)^2 for the columns u_j of U."""
    cdef Py_ssize_t n = Z.shape[0], d = Z.shape[1], k = U.shape[1]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] g = out
    cdef Py_ssize_t i, j, a
    cdef double p, acc
    for i in range(n):
        acc = 0.0
        for j in range(k):
            p = 0.0
            for a in range(d):
                p += U[a, j] * Z[i, a]
            acc += p * p
        g[i] = acc
    return out

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Semantics mirror ``_fallback`` exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def csr_spmm(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
             const double[::1] data, const double[:, ::1] x):
    """Row-major sparse (CSR) times dense; accumulation follows stored order."""
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t width = x.shape[1]
    out_arr = np.zeros((n_rows, width), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, jj, j, col
    cdef double a
    with nogil:
        for i in range(n_rows):
            for jj in range(indptr[i], indptr[i + 1]):
                col = indices[jj]
                a = data[jj]
                for j in range(width):
                    out[i, j] += a * x[col, j]
    return out_arr


def capacity_assign(const double[:, ::1] dist, const cnp.int64_t[::1] nearest,
                    const cnp.int64_t[::1] order, Py_ssize_t cap):
    """Two-pass capacity-constrained assignment.

    Pass 1 visits points in ``order`` and keeps each at its nearest centroid
    while capacity lasts. Pass 2 moves the overflow, in the same order, to the
    closest centroid that still has room (ties -> lowest index).
    """
    cdef Py_ssize_t n = dist.shape[0]
    cdef Py_ssize_t k = dist.shape[1]
    assign_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] assign = assign_arr
    counts_arr = np.zeros(k, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    overflow_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] overflow = overflow_arr
    cdef Py_ssize_t t, p, c, best, n_over = 0
    cdef double bd
    with nogil:
        for t in range(n):
            p = order[t]
            c = nearest[p]
            if counts[c] < cap:
                assign[p] = c
                counts[c] += 1
            else:
                overflow[n_over] = p
                n_over += 1
        for t in range(n_over):
            p = overflow[t]
            best = -1
            bd = 0.0
            for c in range(k):
                if counts[c] < cap and (best < 0 or dist[p, c] < bd):
                    best = c
                    bd = dist[p, c]
            assign[p] = best
            counts[best] += 1
    return assign_arr


def pairwise_auc(const double[::1] pos, const double[::1] neg):
    """Exact Mann-Whitney statistic with ties credited one half."""
    cdef cnp.ndarray[double, ndim=1] ps = np.sort(np.asarray(pos))
    cdef cnp.ndarray[double, ndim=1] ns = np.sort(np.asarray(neg))
    cdef Py_ssize_t n_pos = ps.shape[0]
    cdef Py_ssize_t n_neg = ns.shape[0]
    cdef Py_ssize_t i, lo = 0, hi = 0
    cdef cnp.int64_t wins2 = 0
    cdef double v
    for i in range(n_pos):
        v = ps[i]
        while lo < n_neg and ns[lo] < v:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < n_neg and ns[hi] <= v:
            hi += 1
        wins2 += 2 * lo + (hi - lo)
    return wins2 / (2.0 * n_pos * n_neg)

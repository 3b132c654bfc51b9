"""Pure-Python/numpy implementations of the compiled kernels."""

import numpy as np
import scipy.sparse as sp


def csr_spmm(indptr, indices, data, x):
    n_rows = len(indptr) - 1
    mat = sp.csr_matrix((data, indices, indptr), shape=(n_rows, x.shape[0]))
    return np.asarray(mat @ x, dtype=np.float64)


def capacity_assign(dist, nearest, order, cap):
    n, k = dist.shape
    assign = np.full(n, -1, dtype=np.int64)
    counts = np.zeros(k, dtype=np.int64)
    overflow = []
    for p in order:
        c = nearest[p]
        if counts[c] < cap:
            assign[p] = c
            counts[c] += 1
        else:
            overflow.append(p)
    for p in overflow:
        masked = np.where(counts < cap, dist[p], np.inf)
        best = int(np.argmin(masked))
        assign[p] = best
        counts[best] += 1
    return assign


def pairwise_auc(pos, neg):
    ns = np.sort(np.asarray(neg, dtype=np.float64))
    pos = np.asarray(pos, dtype=np.float64)
    lo = np.searchsorted(ns, pos, side="left")
    hi = np.searchsorted(ns, pos, side="right")
    wins2 = int(np.sum(2 * lo + (hi - lo)))
    return wins2 / (2.0 * len(pos) * len(ns))

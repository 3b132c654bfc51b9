"""Hot-loop dispatch: compiled extension when built, numpy fallback otherwise.

Set ``GRAPH_UNLEARN_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _fallback

_compiled = None
if os.environ.get("GRAPH_UNLEARN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

_impl = _compiled if _compiled is not None else _fallback
BACKEND = "cython" if _compiled is not None else "python"


def backends():
    """Mapping of available backend name -> kernel module."""
    out = {"python": _fallback}
    if _compiled is not None:
        out["cython"] = _compiled
    return out


def spmm(mat, x, impl=None):
    """``mat @ x`` for a scipy CSR matrix and a dense 2-D array."""
    impl = impl or _impl
    x = np.ascontiguousarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    out = impl.csr_spmm(
        np.ascontiguousarray(mat.indptr, dtype=np.int64),
        np.ascontiguousarray(mat.indices, dtype=np.int64),
        np.ascontiguousarray(mat.data, dtype=np.float64),
        x,
    )
    return out[:, 0] if squeeze else out


def capacity_assign(dist, cap, impl=None):
    """Assign each row of ``dist`` (points x centroids) under a per-centroid cap.

    Points keep their nearest centroid in order of increasing distance; the
    overflow goes to the nearest centroid with spare room.
    """
    impl = impl or _impl
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    n, k = dist.shape
    if cap * k < n:
        raise ValueError("capacity too small for all points")
    nearest = np.argmin(dist, axis=1).astype(np.int64)
    order = np.lexsort((np.arange(n), dist[np.arange(n), nearest])).astype(np.int64)
    return np.asarray(impl.capacity_assign(dist, nearest, order, int(cap)), dtype=np.int64)


def pairwise_auc(pos, neg, impl=None):
    impl = impl or _impl
    return float(impl.pairwise_auc(
        np.ascontiguousarray(pos, dtype=np.float64),
        np.ascontiguousarray(neg, dtype=np.float64),
    ))

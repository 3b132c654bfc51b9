"""Projection-based unlearning for linear (SGC) models."""

import numpy as np

from ..errors import KindMismatch, WrongBackbone
from ..gnn import ModelParams, normalized_adjacency, propagate
from ..graph import DataSplit, Graph, UnlearnRequest
from .retrain import residual

RANK_CUTOFF = 1e-10


def row_space_basis(f_rows, cutoff=RANK_CUTOFF):
    """Orthonormal basis (columns) of the span of the rows of ``f_rows``."""
    f_rows = np.atleast_2d(np.asarray(f_rows, dtype=np.float64))
    if f_rows.size == 0:
        return np.zeros((f_rows.shape[1], 0))
    _, s, vt = np.linalg.svd(f_rows, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((f_rows.shape[1], 0))
    rank = int(np.sum(s > cutoff * s[0]))
    return vt[:rank].T


def project_weights(w, f_rows, cutoff=RANK_CUTOFF):
    """Project every column of ``w`` onto span(rows of ``f_rows``)."""
    q = row_space_basis(f_rows, cutoff)
    return q @ (q.T @ w)


def projector_unlearn(params: ModelParams, g: Graph, split: DataSplit, request: UnlearnRequest) -> ModelParams:
    if params.backbone != "sgc" or len(params.weights) != 1:
        raise WrongBackbone("projector needs a single-matrix SGC model")
    if request.kind != "node":
        raise KindMismatch("projector handles node requests")
    g2, split2, _ = residual(g, split, request)
    feats = propagate(g2.features, normalized_adjacency(g2), params.hops)
    retained = np.asarray(split2.train_ids, dtype=np.int64)
    retained = retained[g2.label_mask()[retained]]
    w = project_weights(params.weights[0], feats[retained])
    return ModelParams(params.backbone, params.hops, (w,))

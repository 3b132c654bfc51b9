"""Ground-truth model: retraining from scratch on the pruned graph."""

import numpy as np

from ..gnn import BackboneSpec, Hyper, ModelParams, train
from ..graph import DataSplit, Graph, UnlearnRequest, apply_request, remap_split, validate_request


def residual(g: Graph, split: DataSplit, request: UnlearnRequest, strict=True):
    """Pruned graph, translated split and old->new node map."""
    if strict:
        validate_request(g, request, split)
    g2, id_map = apply_request(g, request, strict=strict)
    if request.kind == "node" and not g.is_batch:
        split = remap_split(split, id_map)
    return g2, split, id_map


def retrain_oracle(spec: BackboneSpec, g: Graph, split: DataSplit, request: UnlearnRequest,
                   task: str, hyper: Hyper, seed: int) -> ModelParams:
    g2, split2, _ = residual(g, split, request)
    return train(spec, g2, split2, task, hyper, seed)


def translate_ids(id_map, ids):
    """Map ids through ``id_map`` and drop removed ones."""
    out = id_map[np.asarray(ids, dtype=np.int64)]
    return out[out >= 0]

"""Learning-based unlearning with layer-wise linear deletion operators.

Base weights stay frozen. Layer k (0-based) gets a square operator applied to
nodes within k+1 hops of the request (SGC: its L-hop set), so nodes outside
the final affected set see exactly the base model's computation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import EmptyRequest, KindMismatch
from ..gnn import ModelParams, Net, _sigmoid, pair_scores, pool_matrix, softmax
from ..graph import Graph, UnlearnRequest, incident_edges, k_hop, make_request, apply_request
from ..rng import stream


@dataclass(eq=False)
class DeletionModel:
    base: ModelParams
    operators: dict  # layer -> (d, d) matrix
    layer_nodes: dict  # layer -> node ids the operator acts on
    affected: np.ndarray
    deleted_edges: np.ndarray
    history: Optional[list] = None

    def deletion(self):
        return {k: (self.layer_nodes[k], self.operators[k]) for k in self.operators}

    def unlinked(self, g: Graph) -> Graph:
        """``g`` with the deleted edges taken out of propagation."""
        if len(self.deleted_edges) == 0:
            return g
        req = make_request("edge", [tuple(e) for e in self.deleted_edges])
        return apply_request(g, req, strict=False)[0]

    def forward(self, g: Graph):
        net = Net(self.base.backbone, self.base.hops, self.unlinked(g))
        return net.forward(self.base.weights, self.deletion())["out"]

    def predict_proba(self, g: Graph, ids=None):
        out = self.forward(g)
        if g.is_batch:
            out = pool_matrix(g) @ out
        p = softmax(out)
        return p if ids is None else p[np.asarray(ids, dtype=np.int64)]

    def score_edges(self, g: Graph, pairs):
        return pair_scores(self.forward(g), pairs)


def _layer_sets(params: ModelParams, g: Graph, seeds):
    if params.backbone == "sgc":
        return {0: k_hop(g, seeds, params.hops)}
    return {k: k_hop(g, seeds, k + 1) for k in range(len(params.weights))}


def gnndelete_unlearn(params: ModelParams, g: Graph, request: UnlearnRequest, epochs=100, alpha=0.5,
                      lr=0.05, seed=0, num_random=16, track=False) -> DeletionModel:
    """Fit deletion operators on alpha * DEC + (1 - alpha) * NI.

    DEC pulls each deleted pair's score toward the base model's mean score
    over ``num_random`` seeded uniform node pairs; NI keeps retained affected nodes' final
    outputs near their base values. ``g`` is the graph the base model
    propagates over.
    """
    if request.kind not in ("node", "edge"):
        raise KindMismatch("gnndelete handles node and edge requests")
    if request.size == 0:
        raise EmptyRequest("nothing to delete")
    if request.kind == "edge":
        deleted = np.array(sorted(request.delta_e), dtype=np.int64).reshape(-1, 2)
    else:
        deleted = incident_edges(g, request.delta_v)
    seeds = request.seed_nodes()
    layer_nodes = _layer_sets(params, g, seeds)
    last = max(layer_nodes)
    affected = layer_nodes[last]
    removed = np.asarray(sorted(request.delta_v), dtype=np.int64)
    retained = np.setdiff1d(affected, removed)

    base_net = Net(params.backbone, params.hops, g)
    base_out = base_net.forward(params.weights)["out"]
    rng = stream(seed, "gnndelete", "pairs")
    rand = rng.integers(0, g.n, size=(len(deleted) * num_random, 2))
    rand[:, 1] = np.where(rand[:, 0] == rand[:, 1], (rand[:, 1] + 1) % g.n, rand[:, 1])
    if len(deleted):
        target = pair_scores(base_out, rand).reshape(len(deleted), num_random).mean(axis=1)
    else:
        target = np.zeros(0)

    model = DeletionModel(
        base=params,
        operators={k: np.eye(params.weights[k].shape[1]) for k in layer_nodes},
        layer_nodes=layer_nodes,
        affected=affected,
        deleted_edges=deleted,
        history=[] if track else None,
    )
    net = Net(params.backbone, params.hops, model.unlinked(g))
    du, dv = (deleted[:, 0], deleted[:, 1]) if len(deleted) else (np.zeros(0, np.int64),) * 2
    for _ in range(epochs):
        cache = net.forward(params.weights, model.deletion())
        out = cache["out"]
        d_out = np.zeros_like(out)
        value = 0.0
        if len(deleted) and alpha > 0:
            s = np.einsum("ij,ij->i", out[du], out[dv])
            p = _sigmoid(s)
            diff = p - target
            value += alpha * float(np.mean(diff ** 2))
            ds = alpha * 2.0 * diff * p * (1.0 - p) / len(deleted)
            np.add.at(d_out, du, ds[:, None] * out[dv])
            np.add.at(d_out, dv, ds[:, None] * out[du])
        if len(retained) and alpha < 1:
            gap = out[retained] - base_out[retained]
            value += (1.0 - alpha) * float(np.sum(gap ** 2)) / len(retained)
            d_out[retained] += (1.0 - alpha) * 2.0 * gap / len(retained)
        if model.history is not None:
            model.history.append(value)
        _, d_del = net.backward(cache, params.weights, d_out)
        for k, gk in d_del.items():
            model.operators[k] = model.operators[k] - lr * gk
    return model

"""Message-passing backbones, task losses, training, gradients and Hessian-vector products.

All three backbones share one layer shape: a linear neighbourhood aggregation
``Q = agg(H)`` followed by ``Z = Q @ W`` and a ReLU on every layer except the
last. That lets one backward pass and one forward-over-reverse pass (for
exact Hessian-vector products) serve every backbone and task.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import MissingLabels, NoEdges, OutOfRange, ShapeMismatch
from .graph import DataSplit, Graph, replace, sample_non_edges, training_view
from .rng import stream

BACKBONES = ("gcn", "sgc", "sage")
TASKS = ("node", "link", "graph")


@dataclass(frozen=True)
class BackboneSpec:
    name: str = "gcn"
    hops: int = 2

    def __post_init__(self):
        if self.name not in BACKBONES:
            raise ValueError(f"unknown backbone {self.name!r}; choose from {BACKBONES}")
        if self.hops < 0 or (self.name != "sgc" and self.hops < 1):
            raise ValueError("hop count too small for backbone")


@dataclass(frozen=True)
class Hyper:
    lr: float = 0.1
    epochs: int = 200
    weight_decay: float = 5e-4
    hidden: int = 64


@dataclass(frozen=True, eq=False)
class ModelParams:
    backbone: str
    hops: int
    weights: tuple

    @property
    def shapes(self):
        return [w.shape for w in self.weights]

    @property
    def num_params(self):
        return sum(w.size for w in self.weights)

    def flat(self):
        return np.concatenate([w.ravel() for w in self.weights])

    def with_flat(self, vec):
        return ModelParams(self.backbone, self.hops, unflatten(vec, self.shapes))

    def to_json(self):
        return {
            "backbone": self.backbone,
            "L": self.hops,
            "shapes": [list(s) for s in self.shapes],
            "weights": [w.ravel().tolist() for w in self.weights],
        }

    @classmethod
    def from_json(cls, doc):
        weights = tuple(
            np.asarray(w, dtype=np.float64).reshape(s) for w, s in zip(doc["weights"], doc["shapes"])
        )
        return cls(doc["backbone"], int(doc["L"]), weights)

    def dumps(self):
        return json.dumps(self.to_json())

    def equals(self, other):
        """Bitwise equality of architecture and weights."""
        return (
            self.backbone == other.backbone
            and self.hops == other.hops
            and len(self.weights) == len(other.weights)
            and all(a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in zip(self.weights, other.weights))
        )


def unflatten(vec, shapes):
    out, pos = [], 0
    for s in shapes:
        size = int(np.prod(s))
        out.append(np.asarray(vec[pos:pos + size], dtype=np.float64).reshape(s).copy())
        pos += size
    if pos != len(vec):
        raise ShapeMismatch(f"flat vector has {len(vec)} entries, expected {pos}")
    return tuple(out)


# ---------------------------------------------------------------- propagation


@dataclass(frozen=True, eq=False)
class PropagationOperator:
    """D^-1/2 (A + I) D^-1/2 in canonical CSR (row-major, ascending columns)."""

    matrix: sp.csr_matrix

    @property
    def n(self):
        return self.matrix.shape[0]


def normalized_adjacency(g: Graph) -> PropagationOperator:
    a = g.adjacency() + sp.identity(g.n, format="csr")
    a = sp.csr_matrix(a)
    a.sort_indices()
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv = 1.0 / np.sqrt(deg)
    rows = np.repeat(np.arange(g.n), np.diff(a.indptr))
    data = inv[rows] * inv[a.indices]
    return PropagationOperator(sp.csr_matrix((data, a.indices.copy(), a.indptr.copy()), shape=a.shape))


def mean_aggregator(g: Graph) -> sp.csr_matrix:
    """Row-normalized adjacency; isolated nodes get an all-zero row."""
    a = g.adjacency()
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    mat = sp.csr_matrix(sp.diags(inv) @ a)
    mat.sort_indices()
    return mat


def propagate(x, op: PropagationOperator, hops: int):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != op.n:
        raise ShapeMismatch(f"feature rows {x.shape[0]} != operator size {op.n}")
    if hops < 0:
        raise ValueError("hops must be non-negative")
    out = x
    for _ in range(hops):
        out = kernels.spmm(op.matrix, out)
    return out


# ---------------------------------------------------------------- network


class Net:
    """Backbone bound to one graph; caches the aggregation operators."""

    def __init__(self, backbone: str, hops: int, g: Graph, op: Optional[PropagationOperator] = None):
        self.backbone = backbone
        self.hops = hops
        self.graph = g
        x = g.features
        if backbone in ("gcn", "sgc"):
            self.op = op if op is not None and op.n == g.n else normalized_adjacency(g)
        if backbone == "gcn":
            self.num_layers = hops
            self.q0 = kernels.spmm(self.op.matrix, x)
        elif backbone == "sgc":
            self.num_layers = 1
            self.q0 = propagate(x, self.op, hops)
        else:
            self.num_layers = hops
            self.mean = mean_aggregator(g)
            self.mean_t = sp.csr_matrix(self.mean.T)
            self.mean_t.sort_indices()
            self.q0 = np.hstack([x, kernels.spmm(self.mean, x)])

    def agg(self, h):
        if self.backbone == "gcn":
            return kernels.spmm(self.op.matrix, h)
        return np.hstack([h, kernels.spmm(self.mean, h)])

    def agg_t(self, grad_q):
        if self.backbone == "gcn":
            return kernels.spmm(self.op.matrix, grad_q)
        d = grad_q.shape[1] // 2
        return grad_q[:, :d] + kernels.spmm(self.mean_t, np.ascontiguousarray(grad_q[:, d:]))

    def check(self, weights):
        if len(weights) != self.num_layers:
            raise ShapeMismatch(f"{self.backbone} with L={self.hops} needs {self.num_layers} weight matrices")
        if weights[0].shape[0] != self.q0.shape[1]:
            raise ShapeMismatch(f"first weight has {weights[0].shape[0]} rows, input width is {self.q0.shape[1]}")

    def forward(self, weights, deletion=None):
        """Run all layers. ``deletion`` maps layer index -> (node ids, square matrix)."""
        self.check(weights)
        qs, zs, masks, pre = [], [], [], []
        h = None
        for k, w in enumerate(weights):
            q = self.q0 if k == 0 else self.agg(h)
            z = q @ w
            last = k == len(weights) - 1
            mask = None if last else (z > 0)
            h = z if last else z * mask
            if deletion is not None and k in deletion:
                idx, dmat = deletion[k]
                pre.append(h)
                h = h.copy()
                h[idx] = h[idx] @ dmat
            else:
                pre.append(None)
            qs.append(q)
            zs.append(z)
            masks.append(mask)
        return {"q": qs, "z": zs, "mask": masks, "pre": pre, "out": h, "deletion": deletion}

    def backward(self, cache, weights, d_out):
        """Gradients w.r.t. weights (list) and deletion matrices (dict)."""
        grads = [None] * len(weights)
        d_del = {}
        dh = d_out
        deletion = cache["deletion"]
        for k in range(len(weights) - 1, -1, -1):
            if deletion is not None and k in deletion:
                idx, dmat = deletion[k]
                d_del[k] = cache["pre"][k][idx].T @ dh[idx]
                dh = dh.copy()
                dh[idx] = dh[idx] @ dmat.T
            mask = cache["mask"][k]
            dz = dh if mask is None else dh * mask
            grads[k] = cache["q"][k].T @ dz
            if k > 0:
                dh = self.agg_t(dz @ weights[k].T)
        return grads, d_del

    def hvp_pass(self, cache, weights, head, vs):
        """Forward-over-reverse product of the head loss Hessian with ``vs``."""
        r_h = None
        r_qs = []
        for k, (w, v) in enumerate(zip(weights, vs)):
            q = cache["q"][k]
            if k == 0:
                r_q = None
                r_z = q @ v
            else:
                r_q = self.agg(r_h)
                r_z = r_q @ w + q @ v
            mask = cache["mask"][k]
            r_h = r_z if mask is None else r_z * mask
            r_qs.append(r_q)
        out = cache["out"]
        d_out = head.grad(out)
        r_dh = head.rgrad(out, r_h)
        dh = d_out
        res = [None] * len(weights)
        for k in range(len(weights) - 1, -1, -1):
            mask = cache["mask"][k]
            dz = dh if mask is None else dh * mask
            r_dz = r_dh if mask is None else r_dh * mask
            res[k] = cache["q"][k].T @ r_dz
            if r_qs[k] is not None:
                res[k] = res[k] + r_qs[k].T @ dz
            if k > 0:
                dh = self.agg_t(dz @ weights[k].T)
                r_dh = self.agg_t(r_dz @ weights[k].T + dz @ vs[k].T)
        return res


# ---------------------------------------------------------------- heads


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid(s):
    return np.where(s >= 0, 1.0 / (1.0 + np.exp(-np.abs(s))), np.exp(-np.abs(s)) / (1.0 + np.exp(-np.abs(s))))


class NodeHead:
    def __init__(self, idx, targets, weights):
        self.idx, self.targets, self.w = idx, targets, weights

    def value(self, out):
        z = out[self.idx]
        zmax = z.max(axis=1)
        lse = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
        return float(np.sum(self.w * (lse - z[np.arange(len(self.idx)), self.targets])))

    def grad(self, out):
        p = _softmax(out[self.idx])
        p[np.arange(len(self.idx)), self.targets] -= 1.0
        d = np.zeros_like(out)
        d[self.idx] = self.w[:, None] * p
        return d

    def rgrad(self, out, r_out):
        p = _softmax(out[self.idx])
        rz = r_out[self.idx]
        r = p * (rz - (p * rz).sum(axis=1, keepdims=True))
        d = np.zeros_like(out)
        d[self.idx] = self.w[:, None] * r
        return d


class LinkHead:
    def __init__(self, pairs, y, weights):
        self.u, self.v = pairs[:, 0], pairs[:, 1]
        self.y, self.w = y, weights

    def scores(self, out):
        return np.einsum("ij,ij->i", out[self.u], out[self.v])

    def value(self, out):
        s = self.scores(out)
        # -y log sig(s) - (1-y) log(1-sig(s)) = softplus(s) - y s
        return float(np.sum(self.w * (np.logaddexp(0.0, s) - self.y * s)))

    def _scatter(self, coef_u, coef_v, shape):
        d = np.zeros(shape)
        np.add.at(d, self.u, coef_u)
        np.add.at(d, self.v, coef_v)
        return d

    def grad(self, out):
        ds = self.w * (_sigmoid(self.scores(out)) - self.y)
        return self._scatter(ds[:, None] * out[self.v], ds[:, None] * out[self.u], out.shape)

    def rgrad(self, out, r_out):
        p = _sigmoid(self.scores(out))
        ds = self.w * (p - self.y)
        rs = np.einsum("ij,ij->i", r_out[self.u], out[self.v]) + np.einsum("ij,ij->i", out[self.u], r_out[self.v])
        r_ds = self.w * p * (1.0 - p) * rs
        return self._scatter(
            r_ds[:, None] * out[self.v] + ds[:, None] * r_out[self.v],
            r_ds[:, None] * out[self.u] + ds[:, None] * r_out[self.u],
            out.shape,
        )


class GraphHead:
    """Mean-pool readout followed by softmax cross-entropy over graphs."""

    def __init__(self, pool, idx, targets, weights):
        self.pool, self.pool_t = pool, sp.csr_matrix(pool.T)
        self.inner = NodeHead(idx, targets, weights)

    def value(self, out):
        return self.inner.value(kernels.spmm(self.pool, out))

    def grad(self, out):
        return kernels.spmm(self.pool_t, self.inner.grad(kernels.spmm(self.pool, out)))

    def rgrad(self, out, r_out):
        pooled = kernels.spmm(self.pool, out)
        return kernels.spmm(self.pool_t, self.inner.rgrad(pooled, kernels.spmm(self.pool, r_out)))


def pool_matrix(g: Graph):
    counts = np.bincount(g.node_graph, minlength=g.num_graphs).astype(np.float64)
    data = 1.0 / counts[g.node_graph]
    mat = sp.csr_matrix((data, (g.node_graph, np.arange(g.n))), shape=(g.num_graphs, g.n))
    mat.sort_indices()
    return mat


# ---------------------------------------------------------------- objectives


@dataclass(eq=False)
class Objective:
    """Training loss of one task on one graph/split, ready for grad and hvp.

    Units are the loss terms: train nodes, train pairs, or train graphs.
    ``view_ids`` maps nodes of the propagation graph back to the source graph.
    """

    task: str
    net: Net
    weight_decay: float
    unit_nodes: list  # per unit: array of source-graph node ids it depends on directly
    view_ids: np.ndarray
    source_n: int
    idx: Optional[np.ndarray] = None
    targets: Optional[np.ndarray] = None
    pairs: Optional[np.ndarray] = None
    pair_labels: Optional[np.ndarray] = None
    pool: Optional[sp.csr_matrix] = None
    node_graph: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    @property
    def num_units(self):
        return len(self.unit_nodes) if self.task != "graph" else len(self.idx)

    def head(self, unit_weights=None):
        w = unit_weights if unit_weights is not None else np.full(self.num_units, 1.0 / max(self.num_units, 1))
        if self.task == "node":
            return NodeHead(self.idx, self.targets, w)
        if self.task == "link":
            return LinkHead(self.pairs, self.pair_labels, w)
        return GraphHead(self.pool, self.idx, self.targets, w)

    def units_touching(self, nodes):
        """Boolean mask of units whose loss depends directly on any of ``nodes`` (source ids)."""
        hit = np.zeros(self.source_n, dtype=bool)
        hit[np.asarray(nodes, dtype=np.int64)] = True
        to_view = self.view_ids
        if self.task == "node":
            return hit[to_view[self.idx]]
        if self.task == "link":
            return hit[to_view[self.pairs[:, 0]]] | hit[to_view[self.pairs[:, 1]]]
        graphs_hit = np.zeros(self.pool.shape[0], dtype=bool)
        graphs_hit[self.node_graph[hit[to_view]]] = True
        return graphs_hit[self.idx]


def build_objective(spec: BackboneSpec, g: Graph, split: DataSplit, task: str, weight_decay=0.0, seed=0, op=None):
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    view, vsplit, view_ids = training_view(g, split)
    if task == "graph":
        if g.graph_labels is None:
            raise MissingLabels("graph task needs graph labels")
        idx = np.asarray(split.train_ids, dtype=np.int64)
        net = Net(spec.name, spec.hops, g, op)
        return Objective(
            task, net, weight_decay, unit_nodes=[None] * len(idx), view_ids=view_ids, source_n=g.n,
            idx=idx, targets=g.graph_labels[idx], pool=pool_matrix(g), node_graph=g.node_graph,
        )
    train = np.asarray(vsplit.train_ids, dtype=np.int64)
    if task == "node":
        if view.labels is None:
            raise MissingLabels("node task needs node labels")
        idx = train[view.label_mask()[train]]
        if idx.size == 0:
            raise MissingLabels("no labeled training nodes")
        net = Net(spec.name, spec.hops, view, op)
        return Objective(
            task, net, weight_decay, unit_nodes=list(idx), view_ids=view_ids, source_n=g.n,
            idx=idx, targets=view.labels[idx],
        )
    in_train = np.zeros(view.n, dtype=bool)
    in_train[train] = True
    pos = view.edges[in_train[view.edges[:, 0]] & in_train[view.edges[:, 1]]] if view.m else view.edges
    if len(pos) == 0:
        raise NoEdges("link task needs at least one training edge")
    neg = sample_non_edges(view, len(pos), stream(seed, "negatives"), nodes=train)
    pairs = np.concatenate([pos, neg]).astype(np.int64)
    y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    message_graph = replace(view, edges=pos)
    net = Net(spec.name, spec.hops, message_graph, None)
    return Objective(
        task, net, weight_decay, unit_nodes=list(pairs), view_ids=view_ids, source_n=g.n,
        pairs=pairs, pair_labels=y, extra={"message_graph": message_graph},
    )


def link_message_graph(g: Graph, split: DataSplit) -> Graph:
    """Graph used for link inference: all nodes, only train-train edges."""
    in_train = np.zeros(g.n, dtype=bool)
    in_train[split.train_ids] = True
    if g.m == 0:
        return g
    return replace(g, edges=g.edges[in_train[g.edges[:, 0]] & in_train[g.edges[:, 1]]])


def _wd_term(params, wd):
    return 0.5 * wd * sum(float(np.sum(w * w)) for w in params.weights)


def objective_loss(params: ModelParams, obj: Objective, unit_weights=None, include_decay=True):
    cache = obj.net.forward(params.weights)
    val = obj.head(unit_weights).value(cache["out"])
    return val + (_wd_term(params, obj.weight_decay) if include_decay else 0.0)


def objective_grad(params: ModelParams, obj: Objective, unit_weights=None, include_decay=True):
    cache = obj.net.forward(params.weights)
    grads, _ = obj.net.backward(cache, params.weights, obj.head(unit_weights).grad(cache["out"]))
    flat = np.concatenate([gw.ravel() for gw in grads])
    if include_decay:
        flat = flat + obj.weight_decay * params.flat()
    return flat


def objective_hvp(params: ModelParams, obj: Objective, vec, cache=None):
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (params.num_params,):
        raise ShapeMismatch(f"vector length {vec.shape} != parameter count {params.num_params}")
    cache = cache or obj.net.forward(params.weights)
    vs = unflatten(vec, params.shapes)
    res = obj.net.hvp_pass(cache, params.weights, obj.head(), vs)
    return np.concatenate([r.ravel() for r in res]) + obj.weight_decay * vec


# ---------------------------------------------------------------- training


def output_dim(g: Graph, task, hyper: Hyper):
    if task == "link":
        return hyper.hidden
    return g.num_classes


def init_params(spec: BackboneSpec, in_dim, hidden, out_dim, seed) -> ModelParams:
    rng = stream(seed, "init")
    if spec.name == "sgc":
        dims = [(in_dim, out_dim)]
    else:
        widths = [in_dim] + [hidden] * (spec.hops - 1) + [out_dim]
        factor = 2 if spec.name == "sage" else 1
        dims = [(factor * a, b) for a, b in zip(widths[:-1], widths[1:])]
    weights = []
    for fan_in, fan_out in dims:
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_in, fan_out)))
    return ModelParams(spec.name, spec.hops, tuple(weights))


def fit(params: ModelParams, obj: Objective, lr, epochs, history=None) -> ModelParams:
    """Plain full-batch gradient descent from ``params``."""
    weights = [w.copy() for w in params.weights]
    wd = obj.weight_decay
    head = obj.head()
    for _ in range(epochs):
        cache = obj.net.forward(weights)
        if history is not None:
            history.append(head.value(cache["out"]) + 0.5 * wd * sum(float(np.sum(w * w)) for w in weights))
        grads, _ = obj.net.backward(cache, weights, head.grad(cache["out"]))
        for w, gw in zip(weights, grads):
            w -= lr * (gw + wd * w)
    return ModelParams(params.backbone, params.hops, tuple(weights))


def train(spec: BackboneSpec, g: Graph, split: DataSplit, task: str, hyper: Hyper, seed: int, history=None) -> ModelParams:
    obj = build_objective(spec, g, split, task, hyper.weight_decay, seed)
    in_dim = g.num_features
    init = init_params(spec, in_dim, hyper.hidden, output_dim(g, task, hyper), seed)
    return fit(init, obj, hyper.lr, hyper.epochs, history)


# ---------------------------------------------------------------- inference


def forward(params: ModelParams, g: Graph, cache: Optional[PropagationOperator] = None):
    """Final-layer node outputs (embeddings for link, logits for node/graph)."""
    return Net(params.backbone, params.hops, g, cache).forward(params.weights)["out"]


def softmax(z):
    return _softmax(np.asarray(z, dtype=np.float64))


def predict_proba(params: ModelParams, g: Graph, ids=None):
    out = forward(params, g)
    if g.is_batch:
        out = kernels.spmm(pool_matrix(g), out)
    p = _softmax(out)
    return p if ids is None else p[np.asarray(ids, dtype=np.int64)]


def predict(params: ModelParams, g: Graph, ids=None):
    """Argmax class; ties resolve to the lowest index."""
    return np.argmax(predict_proba(params, g, ids), axis=1)


def pair_scores(emb, pairs):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= emb.shape[0]):
        raise OutOfRange("pair references a node outside the graph")
    return _sigmoid(np.einsum("ij,ij->i", emb[pairs[:, 0]], emb[pairs[:, 1]]))


def score_edges(params: ModelParams, g: Graph, pairs):
    return pair_scores(forward(params, g), pairs)


# ---------------------------------------------------------------- convenience


def loss(params, g, split, task, weight_decay=0.0, seed=0):
    spec = BackboneSpec(params.backbone, params.hops)
    return objective_loss(params, build_objective(spec, g, split, task, weight_decay, seed))


def grad(params, g, split, task, weight_decay=0.0, seed=0):
    spec = BackboneSpec(params.backbone, params.hops)
    return objective_grad(params, build_objective(spec, g, split, task, weight_decay, seed))


def hvp(params, g, split, task, v, weight_decay=0.0, seed=0):
    spec = BackboneSpec(params.backbone, params.hops)
    return objective_hvp(params, build_objective(spec, g, split, task, weight_decay, seed), v)

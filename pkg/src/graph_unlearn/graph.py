"""Graph containers, splits, unlearning requests and perturbations."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import (
    EmptyRequest,
    InvalidProbability,
    InvalidRatio,
    KindMismatch,
    MissingTarget,
    NonFinite,
    OutOfRange,
    ShapeMismatch,
)
from .rng import stream

TRANSDUCTIVE = "transductive"
INDUCTIVE = "inductive"
REQUEST_KINDS = ("node", "edge", "feature")


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple attributed graph.

    ``edges`` is an (m, 2) int64 array of canonical pairs ``u < v`` sorted
    lexicographically. ``labeled`` marks nodes whose label may be used for
    training; ``None`` means all labels are usable. A batch of graphs for
    graph classification is a single disjoint-union ``Graph`` carrying
    ``node_graph`` (node -> member graph) and ``graph_labels``.
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    num_classes: int = 0
    labeled: Optional[np.ndarray] = None
    node_graph: Optional[np.ndarray] = None
    graph_labels: Optional[np.ndarray] = None
    graph_id: Optional[str] = None

    @property
    def n(self):
        return self.num_nodes

    @property
    def m(self):
        return len(self.edges)

    @property
    def num_features(self):
        return self.features.shape[1]

    @property
    def num_graphs(self):
        return 0 if self.graph_labels is None else len(self.graph_labels)

    @property
    def is_batch(self):
        return self.node_graph is not None

    def adjacency(self):
        """Symmetric 0/1 CSR adjacency without self-loops."""
        if self.m == 0:
            return sp.csr_matrix((self.n, self.n), dtype=np.float64)
        u, v = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        mat = sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n)
        )
        mat.sort_indices()
        return mat

    def degrees(self):
        deg = np.zeros(self.n, dtype=np.int64)
        if self.m:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def edge_set(self):
        return {(int(u), int(v)) for u, v in self.edges}

    def label_mask(self):
        if self.labeled is None:
            return np.ones(self.n, dtype=bool)
        return self.labeled


@dataclass(frozen=True, eq=False)
class GraphSet:
    graphs: tuple
    graph_labels: np.ndarray

    def __post_init__(self):
        if len(self.graphs) != len(self.graph_labels):
            raise ShapeMismatch("one label per graph required")
        if len(self.graph_labels) and np.min(self.graph_labels) < 0:
            raise OutOfRange("graph labels must be non-negative")

    @property
    def num_classes(self):
        return int(np.max(self.graph_labels)) + 1 if len(self.graph_labels) else 0

    def batch(self) -> Graph:
        """Disjoint union with node -> graph membership."""
        offsets = np.cumsum([0] + [g.n for g in self.graphs])
        edges = [g.edges + off for g, off in zip(self.graphs, offsets[:-1]) if g.m]
        node_graph = np.repeat(np.arange(len(self.graphs)), [g.n for g in self.graphs])
        return Graph(
            num_nodes=int(offsets[-1]),
            edges=np.concatenate(edges).astype(np.int64) if edges else np.zeros((0, 2), np.int64),
            features=np.concatenate([g.features for g in self.graphs]),
            node_graph=node_graph.astype(np.int64),
            graph_labels=np.asarray(self.graph_labels, dtype=np.int64),
            num_classes=self.num_classes,
        )


@dataclass(frozen=True)
class DataSplit:
    train_ids: np.ndarray
    test_ids: np.ndarray
    mode: str = TRANSDUCTIVE

    def __post_init__(self):
        if self.mode not in (TRANSDUCTIVE, INDUCTIVE):
            raise ValueError(f"unknown split mode {self.mode!r}")


@dataclass(frozen=True)
class UnlearnRequest:
    kind: str
    delta_v: frozenset = field(default_factory=frozenset)
    delta_e: frozenset = field(default_factory=frozenset)
    delta_x: tuple = ()  # ((node, (dims...)), ...)

    @property
    def size(self):
        return {"node": len(self.delta_v), "edge": len(self.delta_e), "feature": len(self.delta_x)}[self.kind]

    def seed_nodes(self):
        """Nodes directly named by the request."""
        if self.kind == "node":
            return np.array(sorted(self.delta_v), dtype=np.int64)
        if self.kind == "edge":
            return np.array(sorted({x for e in self.delta_e for x in e}), dtype=np.int64)
        return np.array(sorted(v for v, _ in self.delta_x), dtype=np.int64)

    def to_json(self):
        if self.kind == "node":
            targets = sorted(int(v) for v in self.delta_v)
        elif self.kind == "edge":
            targets = [list(e) for e in sorted(self.delta_e)]
        else:
            targets = [[v, list(d)] for v, d in self.delta_x]
        return {"kind": self.kind, "targets": targets}


# ---------------------------------------------------------------- building


def canonical_edges(edges, n):
    """Canonicalize to sorted unique ``u < v`` pairs. Returns (edges, self_loops)."""
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2) if len(edges) else np.zeros((0, 2), np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        bad = arr[(arr < 0).any(axis=1) | (arr >= n).any(axis=1)][0]
        raise OutOfRange(f"edge ({bad[0]}, {bad[1]}) references a node outside [0, {n})")
    loops = arr[:, 0] == arr[:, 1]
    arr = np.sort(arr[~loops], axis=1)
    if len(arr):
        arr = np.unique(arr, axis=0)
    return arr.astype(np.int64), int(loops.sum())


def build_graph(features, labels=None, edges=(), num_classes=None, labeled=None) -> Graph:
    x = np.array(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeMismatch("features must be a nonempty 2-D matrix")
    if not np.all(np.isfinite(x)):
        raise NonFinite("feature matrix contains NaN or Inf")
    n = x.shape[0]
    if labeled is not None:
        labeled = np.asarray(labeled, dtype=bool)
    canon, loops = canonical_edges(edges, n)
    if loops:
        warnings.warn(f"dropped {loops} self-loop(s)", stacklevel=2)
    y = None
    c = 0
    if labels is not None:
        y = np.asarray(labels, dtype=np.int64)
        if y.shape != (n,):
            raise ShapeMismatch(f"labels length {y.shape} != {n}")
        if labeled is None and (y < 0).any():
            raise OutOfRange("negative label")
        usable = y[labeled] if labeled is not None else y
        c = int(num_classes) if num_classes is not None else (int(usable.max()) + 1 if usable.size else 0)
        if usable.size and (usable.min() < 0 or usable.max() >= c):
            raise OutOfRange("label outside [0, c)")
    return Graph(num_nodes=n, edges=canon, features=x, labels=y, num_classes=c, labeled=labeled)


# ---------------------------------------------------------------- splits


def _check_ratio(ratio, name="ratio"):
    if not (0.0 <= float(ratio) <= 1.0):
        raise InvalidRatio(f"{name} {ratio} outside [0, 1]")


def _round(x):
    return int(np.floor(x + 0.5))


def split_dataset(g: Graph, train_ratio: float, mode: str = TRANSDUCTIVE, seed: int = 0) -> DataSplit:
    """Seeded shuffle split over nodes, or over member graphs of a batch."""
    _check_ratio(train_ratio, "train_ratio")
    count = g.num_graphs if g.is_batch else g.n
    perm = stream(seed, "split").permutation(count)
    k = _round(train_ratio * count)
    return DataSplit(np.sort(perm[:k]), np.sort(perm[k:]), mode)


def training_view(g: Graph, split: DataSplit):
    """Graph the model is trained on, the split in its coordinates, and its node ids in ``g``.

    Inductive mode drops test nodes with their incident edges.
    """
    if split.mode == TRANSDUCTIVE or g.is_batch:
        return g, split, np.arange(g.n)
    keep = np.asarray(split.train_ids, dtype=np.int64)
    sub = induced_subgraph(g, keep)
    return sub, DataSplit(np.arange(len(keep)), np.zeros(0, np.int64), split.mode), keep


def induced_subgraph(g: Graph, nodes) -> Graph:
    """Subgraph on ``nodes`` (kept in the given order, re-indexed 0..k-1)."""
    nodes = np.asarray(nodes, dtype=np.int64)
    new_id = np.full(g.n, -1, dtype=np.int64)
    new_id[nodes] = np.arange(len(nodes))
    edges = g.edges
    if len(edges):
        keep = (new_id[edges[:, 0]] >= 0) & (new_id[edges[:, 1]] >= 0)
        edges = np.sort(new_id[edges[keep]], axis=1)
        if len(edges):
            edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    node_graph, graph_labels = None, None
    if g.is_batch:
        members, node_graph = np.unique(g.node_graph[nodes], return_inverse=True)
        node_graph = node_graph.astype(np.int64)
        graph_labels = g.graph_labels[members]
    return Graph(
        num_nodes=len(nodes),
        edges=edges.reshape(-1, 2).astype(np.int64),
        features=g.features[nodes],
        labels=None if g.labels is None else g.labels[nodes],
        num_classes=g.num_classes,
        labeled=None if g.labeled is None else g.labeled[nodes],
        node_graph=node_graph,
        graph_labels=graph_labels,
        graph_id=g.graph_id,
    )


def remap_split(split: DataSplit, id_map) -> DataSplit:
    """Translate a node split through an old->new map (-1 = removed)."""
    tr = id_map[split.train_ids]
    te = id_map[split.test_ids]
    return DataSplit(np.sort(tr[tr >= 0]), np.sort(te[te >= 0]), split.mode)


def k_hop(g: Graph, seeds, hops) -> np.ndarray:
    """Sorted ids within ``hops`` edges of any seed (seeds included)."""
    reached = np.zeros(g.n, dtype=bool)
    seeds = np.asarray(seeds, dtype=np.int64)
    reached[seeds] = True
    if hops <= 0 or g.m == 0:
        return np.flatnonzero(reached)
    adj = g.adjacency()
    frontier = reached.copy()
    for _ in range(hops):
        nxt = (adj @ frontier.astype(np.float64)) > 0
        frontier = nxt & ~reached
        if not frontier.any():
            break
        reached |= frontier
    return np.flatnonzero(reached)


# ---------------------------------------------------------------- requests


def _as_pair(t):
    if isinstance(t, (tuple, list, np.ndarray)) and len(t) == 2 and all(
        isinstance(x, (int, np.integer)) for x in t
    ):
        u, v = int(t[0]), int(t[1])
        return (u, v) if u < v else (v, u)
    return None


def make_request(kind: str, targets: Iterable) -> UnlearnRequest:
    if kind not in REQUEST_KINDS:
        raise KindMismatch(f"unknown request kind {kind!r}")
    targets = list(targets)
    if not targets:
        raise EmptyRequest("request has no targets")
    if kind == "node":
        if not all(isinstance(t, (int, np.integer)) for t in targets):
            raise KindMismatch("node request expects integer node ids")
        return UnlearnRequest("node", delta_v=frozenset(int(t) for t in targets))
    if kind == "edge":
        pairs = [_as_pair(t) for t in targets]
        if any(p is None for p in pairs):
            raise KindMismatch("edge request expects (u, v) pairs")
        if any(u == v for u, v in pairs):
            raise KindMismatch("self-loop cannot be a stored edge")
        return UnlearnRequest("edge", delta_e=frozenset(pairs))
    entries = {}
    for t in targets:
        try:
            node, dims = t
            dims = [int(d) for d in dims]
        except (TypeError, ValueError):
            raise KindMismatch("feature request expects (node, dims) entries") from None
        if not isinstance(node, (int, np.integer)) or not dims:
            raise KindMismatch("feature request expects (node, nonempty dims)")
        entries.setdefault(int(node), set()).update(dims)
    return UnlearnRequest("feature", delta_x=tuple((v, tuple(sorted(d))) for v, d in sorted(entries.items())))


def validate_request(g: Graph, r: UnlearnRequest, split: Optional[DataSplit] = None):
    """Raise MissingTarget unless every target exists (and, with a split, is train data)."""
    if r.kind == "edge":
        present = g.edge_set()
        missing = [e for e in sorted(r.delta_e) if e not in present]
        if missing:
            raise MissingTarget(f"edge {missing[0]} not in graph")
        return
    nodes = r.seed_nodes()
    if nodes.size and (nodes.min() < 0 or nodes.max() >= g.n):
        raise MissingTarget(f"node id outside [0, {g.n})")
    if r.kind == "feature":
        for v, dims in r.delta_x:
            if min(dims) < 0 or max(dims) >= g.num_features:
                raise MissingTarget(f"feature dimension outside [0, {g.num_features}) for node {v}")
    if split is not None:
        if g.is_batch:
            allowed = np.isin(g.node_graph[nodes], split.train_ids)
        else:
            allowed = np.isin(nodes, split.train_ids)
        if not allowed.all():
            raise MissingTarget(f"node {int(nodes[~allowed][0])} is not training data")


def apply_request(g: Graph, r: UnlearnRequest, strict: bool = True):
    """Residual graph after the request, plus an old->new node id map (-1 = removed).

    With ``strict=False`` targets that are already absent are skipped, which
    makes repeated application idempotent.
    """
    identity = np.arange(g.n, dtype=np.int64)
    if r.kind == "edge":
        if strict:
            validate_request(g, r)
        if not r.delta_e or g.m == 0:
            return g, identity
        gone = np.array(sorted(r.delta_e), dtype=np.int64)
        key = g.edges[:, 0] * g.n + g.edges[:, 1]
        keep = ~np.isin(key, gone[:, 0] * g.n + gone[:, 1])
        return replace(g, edges=g.edges[keep]), identity
    if strict:
        validate_request(g, r)
    if r.kind == "feature":
        x = g.features.copy()
        for v, dims in r.delta_x:
            if v < g.n:
                d = [i for i in dims if i < g.num_features]
                x[v, d] = 0.0
        return replace(g, features=x), identity
    drop = np.array(sorted(v for v in r.delta_v if 0 <= v < g.n), dtype=np.int64)
    keep_mask = np.ones(g.n, dtype=bool)
    keep_mask[drop] = False
    keep = np.flatnonzero(keep_mask)
    id_map = np.full(g.n, -1, dtype=np.int64)
    id_map[keep] = np.arange(len(keep))
    return induced_subgraph(g, keep), id_map


def incident_edges(g: Graph, nodes) -> np.ndarray:
    nodes = np.asarray(list(nodes), dtype=np.int64)
    if g.m == 0 or nodes.size == 0:
        return np.zeros((0, 2), np.int64)
    hit = np.isin(g.edges[:, 0], nodes) | np.isin(g.edges[:, 1], nodes)
    return g.edges[hit]


# ---------------------------------------------------------------- synthetic data


def synth_sbm(n, num_classes, p_in, p_out, f, signal=1.0, seed=0) -> Graph:
    """Stochastic block model with class-prototype Gaussian features."""
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise InvalidProbability(f"need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if f < num_classes:
        raise ShapeMismatch("feature width must be at least the class count")
    rng = stream(seed, "sbm")
    labels = rng.permutation(np.arange(n) % num_classes)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    hit = rng.random(len(iu)) < prob
    edges = np.stack([iu[hit], ju[hit]], axis=1).astype(np.int64)
    x = rng.standard_normal((n, f))
    x[np.arange(n), labels] += signal
    return Graph(num_nodes=n, edges=edges, features=x, labels=labels.astype(np.int64), num_classes=num_classes)


def synth_graph_set(num_graphs, num_classes, min_nodes, max_nodes, p_edge, f, signal=1.0, seed=0) -> GraphSet:
    """Small random graphs whose node features carry a class prototype."""
    rng = stream(seed, "graph_set")
    graph_labels = rng.permutation(np.arange(num_graphs) % num_classes)
    graphs = []
    for i, lab in enumerate(graph_labels):
        size = int(rng.integers(min_nodes, max_nodes + 1))
        iu, ju = np.triu_indices(size, k=1)
        hit = rng.random(len(iu)) < p_edge
        x = rng.standard_normal((size, f))
        x[:, lab] += signal
        edges = np.stack([iu[hit], ju[hit]], axis=1).astype(np.int64)
        graphs.append(Graph(num_nodes=size, edges=edges, features=x, graph_id=f"g{i}"))
    return GraphSet(tuple(graphs), graph_labels.astype(np.int64))


# ---------------------------------------------------------------- perturbations

PERTURBATIONS = ("label_noise", "feature_noise", "label_sparsity", "feature_sparsity")


def perturb(g: Graph, split: DataSplit, kind: str, level: float, seed: int = 0):
    """Apply one noise/sparsity perturbation. Returns (graph, label mask or None).

    ``level`` is the flip ratio (label_noise), relative sigma (feature_noise),
    keep ratio (label_sparsity) or drop ratio (feature_sparsity).
    """
    rng = stream(seed, "perturb", kind)
    train = np.asarray(split.train_ids, dtype=np.int64)
    if kind == "feature_noise":
        if level < 0:
            raise InvalidRatio("sigma_rel must be non-negative")
        if level == 0:
            return g, None
        std = g.features.std(axis=0)
        noise = rng.standard_normal(g.features.shape) * (level * std)
        return replace(g, features=g.features + noise), None
    _check_ratio(level, kind)
    if kind == "label_noise":
        if g.labels is None:
            raise ValueError("label noise requires labels")
        count = _round(level * len(train))
        if count == 0:
            return g, None
        pick = rng.choice(train, size=count, replace=False)
        y = g.labels.copy()
        y[pick] = (y[pick] + rng.integers(1, g.num_classes, size=count)) % g.num_classes
        return replace(g, labels=y), None
    if kind == "label_sparsity":
        mask = g.label_mask().copy()
        count = _round(level * len(train))
        if count == len(train):
            return g, mask
        kept = rng.choice(train, size=count, replace=False)
        mask[train] = False
        mask[kept] = True
        return replace(g, labeled=mask), mask
    if kind == "feature_sparsity":
        total = g.features.size
        count = _round(level * total)
        if count == 0:
            return g, None
        flat = g.features.copy().ravel()
        flat[rng.choice(total, size=count, replace=False)] = 0.0
        return replace(g, features=flat.reshape(g.features.shape)), None
    raise ValueError(f"unknown perturbation {kind!r}")


# ---------------------------------------------------------------- sampling helpers


def sample_non_edges(g: Graph, count, rng, nodes=None, exclude=(), predicate=None, max_draws=None):
    """Draw distinct canonical non-edges (u < v) among ``nodes`` in stream order."""
    nodes = np.arange(g.n) if nodes is None else np.asarray(nodes, dtype=np.int64)
    present = g.edge_set() | set(map(tuple, exclude))
    out, seen = [], set()
    if count <= 0:
        return np.zeros((0, 2), np.int64)
    budget = max_draws if max_draws is not None else 50 * count + 1000
    drawn = 0
    while len(out) < count and drawn < budget:
        batch = rng.integers(0, len(nodes), size=(256, 2))  # fixed chunk keeps prefixes stable
        drawn += len(batch)
        for a, b in batch:
            u, v = int(nodes[a]), int(nodes[b])
            if u == v:
                continue
            if u > v:
                u, v = v, u
            if (u, v) in present or (u, v) in seen:
                continue
            if predicate is not None and not predicate(u, v):
                continue
            seen.add((u, v))
            out.append((u, v))
            if len(out) == count:
                break
    return np.array(out, dtype=np.int64).reshape(-1, 2)

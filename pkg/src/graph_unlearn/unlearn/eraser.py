"""Partition-based unlearning: balanced embedding k-means shards, one model per shard."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .. import kernels
from ..errors import GraphUnlearnError, InvalidK, MissingLabels, NoEdges
from ..gnn import (
    BackboneSpec,
    Hyper,
    ModelParams,
    normalized_adjacency,
    pair_scores,
    pool_matrix,
    predict_proba,
    propagate,
    forward,
    train,
)
from ..graph import DataSplit, Graph, UnlearnRequest, induced_subgraph, training_view
from ..rng import derive_seed, stream
from .retrain import residual

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ShardPlan:
    """k shards over training units (nodes, or member graphs for graph tasks)."""

    k: int
    units: np.ndarray  # training unit ids in graph coordinates
    assignment: np.ndarray  # shard id per unit
    models: list  # ModelParams or None (shard had nothing to learn)
    spec: BackboneSpec
    hyper: Hyper
    task: str
    seed: int

    def shard_units(self, shard):
        return self.units[self.assignment == shard]

    def shard_seed(self, shard):
        return derive_seed(self.seed, "shard", int(shard))

    def to_json(self):
        return {
            "k": self.k,
            "units": self.units.tolist(),
            "assignment": self.assignment.tolist(),
            "models": [None if m is None else m.to_json() for m in self.models],
            "backbone": {"name": self.spec.name, "hops": self.spec.hops},
            "hyper": vars(self.hyper),
            "task": self.task,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc):
        return cls(
            k=doc["k"],
            units=np.asarray(doc["units"], dtype=np.int64),
            assignment=np.asarray(doc["assignment"], dtype=np.int64),
            models=[None if m is None else ModelParams.from_json(m) for m in doc["models"]],
            spec=BackboneSpec(**doc["backbone"]),
            hyper=Hyper(**doc["hyper"]),
            task=doc["task"],
            seed=doc["seed"],
        )


def kmeans_pp(x, k, rng):
    """k-means++ seeding (D^2 sampling)."""
    n = len(x)
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def balanced_kmeans(x, k, seed, max_iter=30):
    """Lloyd iterations with a hard cap of ceil(n/k) points per cluster."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    cap = math.ceil(n / k)
    centers = kmeans_pp(x, k, stream(seed, "bekm"))
    assign = None
    for _ in range(max_iter):
        dist = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = kernels.capacity_assign(dist, cap)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for c in range(k):
            members = x[assign == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    return assign


def _unit_embeddings(g: Graph, split: DataSplit, task: str):
    view, vsplit, view_ids = training_view(g, split)
    emb = propagate(view.features, normalized_adjacency(view), 2)
    if task == "graph":
        pooled = pool_matrix(g) @ emb
        return np.asarray(split.train_ids, dtype=np.int64), pooled[split.train_ids]
    train_view = np.asarray(vsplit.train_ids, dtype=np.int64)
    return view_ids[train_view], emb[train_view]


def _shard_graph(g: Graph, units, task):
    if task == "graph":
        nodes = np.flatnonzero(np.isin(g.node_graph, units))
        sub = induced_subgraph(g, nodes)
        return sub, DataSplit(np.arange(sub.num_graphs), np.zeros(0, np.int64))
    sub = induced_subgraph(g, np.sort(units))
    return sub, DataSplit(np.arange(sub.n), np.zeros(0, np.int64))


def _train_shard(g, units, spec, hyper, task, seed):
    if len(units) == 0:
        return None
    sub, split = _shard_graph(g, units, task)
    try:
        return train(spec, sub, split, task, hyper, seed)
    except (MissingLabels, NoEdges) as exc:
        logger.info("shard skipped: %s", exc)
        return None


def partition(g: Graph, split: DataSplit, k: int, spec: BackboneSpec, hyper: Hyper, task: str, seed: int) -> ShardPlan:
    units, emb = _unit_embeddings(g, split, task)
    if not (1 <= k <= len(units)):
        raise InvalidK(f"k={k} outside [1, {len(units)}]")
    assignment = balanced_kmeans(emb, k, seed)
    plan = ShardPlan(k, units, assignment, [None] * k, spec, hyper, task, seed)
    plan.models = [
        _train_shard(g, plan.shard_units(i), spec, hyper, task, plan.shard_seed(i)) for i in range(k)
    ]
    return plan


def touched_shards(plan: ShardPlan, g: Graph, request: UnlearnRequest):
    seeds = request.seed_nodes()
    if plan.task == "graph":
        seeds = np.unique(g.node_graph[seeds])
    hit = np.isin(plan.units, seeds)
    return sorted(set(plan.assignment[hit].tolist()))


def eraser_unlearn(plan: ShardPlan, g: Graph, request: UnlearnRequest, split: DataSplit = None) -> ShardPlan:
    """Retrain only the shards whose data the request touches."""
    if split is None:
        split = DataSplit(plan.units if plan.task != "graph" else np.arange(g.num_graphs), np.zeros(0, np.int64))
    g2, _, id_map = residual(g, split, request)
    shards = touched_shards(plan, g, request)
    units, assignment = plan.units, plan.assignment
    if request.kind == "node" and plan.task != "graph":
        mapped = id_map[units]
        keep = mapped >= 0
        units, assignment = mapped[keep], assignment[keep]
    new = replace(plan, units=units, assignment=assignment, models=list(plan.models))
    for s in shards:
        new.models[s] = _train_shard(g2, new.shard_units(s), plan.spec, plan.hyper, plan.task, plan.shard_seed(s))
    logger.debug("eraser retrained shards %s", shards)
    return new


def _live(plan):
    live = [m for m in plan.models if m is not None]
    if not live:
        raise GraphUnlearnError("no trained shard models")
    return live


def aggregate_predict(plan: ShardPlan, g: Graph, ids=None):
    """Mean of per-shard softmax outputs."""
    live = _live(plan)
    total = sum(predict_proba(m, g, ids) for m in live)
    return total / len(live)


def aggregate_scores(plan: ShardPlan, g: Graph, pairs):
    """Mean of per-shard edge probabilities."""
    live = _live(plan)
    return sum(pair_scores(forward(m, g), pairs) for m in live) / len(live)

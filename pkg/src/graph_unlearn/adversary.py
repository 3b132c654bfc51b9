"""Forgetting audits: confidence-threshold membership inference and edge poisoning."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EmptySet, InsufficientCandidates
from .graph import Graph, _round, replace, sample_non_edges
from .kernels import pairwise_auc
from .rng import stream


@dataclass
class AttackReport:
    kind: str
    auc: Optional[float] = None
    auc_before: Optional[float] = None
    auc_after: Optional[float] = None
    members: int = 0
    nonmembers: int = 0
    poisoned_edges: int = 0
    seed: Optional[int] = None
    extra: dict = field(default_factory=dict)

    @property
    def delta(self):
        return None if self.auc_before is None else self.auc_after - self.auc_before

    def to_json(self):
        doc = asdict(self)
        doc["delta"] = self.delta
        return doc


def membership_scores(probs, labels):
    probs = np.asarray(probs, dtype=np.float64)
    return probs[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)]


def mia_auc(predict_fn: Callable, g: Graph, member_ids, nonmember_ids, labels=None, seed=None) -> AttackReport:
    """Membership score = probability of the true class; AUC of members vs non-members.

    ``predict_fn(ids)`` returns class-probability rows; ``labels`` defaults to
    the graph's node labels.
    """
    member_ids = np.asarray(member_ids, dtype=np.int64)
    nonmember_ids = np.asarray(nonmember_ids, dtype=np.int64)
    if member_ids.size == 0 or nonmember_ids.size == 0:
        raise EmptySet("membership inference needs members and non-members")
    labels = g.labels if labels is None else np.asarray(labels, dtype=np.int64)
    if labels is None:
        raise EmptySet("no labels available")
    pos = membership_scores(predict_fn(member_ids), labels[member_ids])
    neg = membership_scores(predict_fn(nonmember_ids), labels[nonmember_ids])
    return AttackReport("mia", auc=pairwise_auc(pos, neg), members=len(pos), nonmembers=len(neg), seed=seed)


def poison(g: Graph, ratio: float, seed: int, nodes=None):
    """Add round(ratio * m) random non-edges joining differently labelled nodes.

    Returns the poisoned graph and the added (canonical) edges.
    """
    if g.labels is None:
        raise EmptySet("poisoning needs node labels")
    count = _round(ratio * g.m)
    labels = g.labels

    added = sample_non_edges(
        g, count, stream(seed, "poison"), nodes=nodes,
        predicate=lambda u, v: labels[u] != labels[v],
    )
    if len(added) < count:
        raise InsufficientCandidates(f"found {len(added)} of {count} heterophilic non-edges")
    if count == 0:
        return g, added
    edges = np.concatenate([g.edges, added])
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    return replace(g, edges=edges), added


def link_auc(score_fn: Callable, pos_pairs, neg_pairs):
    pos_pairs = np.asarray(pos_pairs, dtype=np.int64).reshape(-1, 2)
    neg_pairs = np.asarray(neg_pairs, dtype=np.int64).reshape(-1, 2)
    if len(pos_pairs) == 0 or len(neg_pairs) == 0:
        raise EmptySet("link AUC needs positive and negative pairs")
    return pairwise_auc(score_fn(pos_pairs), score_fn(neg_pairs))


def poison_recovery(score_before: Callable, score_after: Callable, g_clean: Graph, eval_pos, eval_neg,
                    poison_edges=(), seed=None) -> AttackReport:
    """Link-prediction AUC on held-out pairs before and after unlearning the poison.

    Scorers take an (k, 2) pair array and return edge probabilities; each one
    closes over its own model and inference graph.
    """
    eval_pos = np.asarray(eval_pos, dtype=np.int64).reshape(-1, 2)
    eval_neg = np.asarray(eval_neg, dtype=np.int64).reshape(-1, 2)
    if len(eval_pos) == 0 or len(eval_neg) == 0:
        raise EmptySet("evaluation pairs are empty")
    poisoned = {tuple(map(int, e)) for e in np.asarray(poison_edges).reshape(-1, 2)}
    evals = {tuple(map(int, e)) for e in np.vstack([eval_pos, eval_neg])}
    if poisoned & evals:
        raise ValueError("evaluation pairs overlap the poison edges")
    before = link_auc(score_before, eval_pos, eval_neg)
    after = link_auc(score_after, eval_pos, eval_neg)
    return AttackReport(
        "poison", auc_before=before, auc_after=after, poisoned_edges=len(poisoned), seed=seed,
        members=len(eval_pos), nonmembers=len(eval_neg),
    )

"""Influence-function unlearning: a damped Newton correction solved by conjugate gradient."""

import logging

import numpy as np

from ..errors import CGDiverged, KindMismatch
from ..gnn import BackboneSpec, ModelParams, build_objective, objective_grad, objective_hvp
from ..graph import DataSplit, Graph, UnlearnRequest, k_hop
from .retrain import residual

logger = logging.getLogger(__name__)

DEFAULT_DAMPING = 1e-2
DEFAULT_CG_ITERS = 100
DEFAULT_CG_TOL = 1e-8


def conjugate_gradient(matvec, b, max_iter=DEFAULT_CG_ITERS, tol=DEFAULT_CG_TOL):
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Stops when the residual norm drops below ``tol * ||b||``. Raises
    CGDiverged on negative curvature or when the cap is hit first.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return x
    r = b.copy()
    p = r.copy()
    rr = r @ r
    for it in range(max_iter):
        ap = matvec(p)
        curv = p @ ap
        if curv <= 0.0:
            raise CGDiverged(f"non-positive curvature {curv:.3e} at iteration {it}; raise damping")
        alpha = rr / curv
        x += alpha * p
        r -= alpha * ap
        rr_new = r @ r
        if np.sqrt(rr_new) <= tol * b_norm:
            return x
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise CGDiverged(
        f"residual {np.sqrt(rr) / b_norm:.3e} (relative) above {tol:.0e} after {max_iter} iterations; raise damping"
    )


def hop_radius(params: ModelParams):
    return params.hops


def affected_nodes(g: Graph, request: UnlearnRequest, hops: int):
    """Requested entities plus their ``hops``-hop neighbourhood."""
    return k_hop(g, request.seed_nodes(), hops)


def _newton_step(params, obj, delta, damping, cg_iters, cg_tol):
    if not np.any(delta):
        return params
    cache = obj.net.forward(params.weights)

    def matvec(v):
        return objective_hvp(params, obj, v, cache) + damping * v

    x = conjugate_gradient(matvec, delta, cg_iters, cg_tol)
    # Newton step on the pruned loss: theta - H^-1 (grad_pruned - grad_full)
    return params.with_flat(params.flat() - x)


def gif_unlearn(params: ModelParams, g: Graph, split: DataSplit, request: UnlearnRequest, task: str,
                weight_decay=0.0, damping=DEFAULT_DAMPING, cg_iters=DEFAULT_CG_ITERS,
                cg_tol=DEFAULT_CG_TOL, seed=0) -> ModelParams:
    """Graph-aware influence update restricted to the request's receptive field.

    The gradient difference is taken only over loss terms that touch the
    affected set (requested entities plus their L-hop neighbourhood), each
    normalized by the original number of loss terms, plus the closed-form
    decay term for the change in loss-term count.
    """
    spec = BackboneSpec(params.backbone, params.hops)
    affected = affected_nodes(g, request, hop_radius(params))
    obj = build_objective(spec, g, split, task, weight_decay, seed)
    g2, split2, id_map = residual(g, split, request)
    obj2 = build_objective(spec, g2, split2, task, weight_decay, seed)
    affected2 = id_map[affected]
    affected2 = affected2[affected2 >= 0]
    scale = 1.0 / obj.num_units
    w1 = obj.units_touching(affected) * scale
    w2 = obj2.units_touching(affected2) * scale
    delta = (objective_grad(params, obj2, w2, include_decay=False)
             - objective_grad(params, obj, w1, include_decay=False))
    # training minimizes the mean loss, so dropping units strengthens the decay
    # relative to the data term by (N - N') / N
    delta -= (obj.num_units - obj2.num_units) * scale * weight_decay * params.flat()
    logger.debug("gif: %d affected nodes, |delta|=%.3e", len(affected), np.linalg.norm(delta))
    return _newton_step(params, obj, delta, damping, cg_iters, cg_tol)


def ceu_unlearn(params: ModelParams, g: Graph, split: DataSplit, request: UnlearnRequest, task: str,
                weight_decay=0.0, damping=DEFAULT_DAMPING, cg_iters=DEFAULT_CG_ITERS,
                cg_tol=DEFAULT_CG_TOL, seed=0) -> ModelParams:
    """Single Newton step over the full training loss for edge removal."""
    if request.kind != "edge":
        raise KindMismatch("ceu handles edge requests only")
    spec = BackboneSpec(params.backbone, params.hops)
    if not request.delta_e:
        return params
    obj = build_objective(spec, g, split, task, weight_decay, seed)
    g2, split2, _ = residual(g, split, request)
    obj2 = build_objective(spec, g2, split2, task, weight_decay, seed)
    delta = (objective_grad(params, obj2, include_decay=False)
             - objective_grad(params, obj, include_decay=False))
    return _newton_step(params, obj, delta, damping, cg_iters, cg_tol)

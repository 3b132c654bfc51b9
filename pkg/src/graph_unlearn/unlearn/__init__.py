"""One representative per unlearning family plus the retraining oracle."""

from .eraser import ShardPlan, aggregate_predict, aggregate_scores, eraser_unlearn, partition
from .gnndelete import DeletionModel, gnndelete_unlearn
from .influence import affected_nodes, ceu_unlearn, conjugate_gradient, gif_unlearn
from .projector import project_weights, projector_unlearn
from .retrain import residual, retrain_oracle
from .utu import utu_unlearn

__all__ = [
    "DeletionModel",
    "ShardPlan",
    "affected_nodes",
    "aggregate_predict",
    "aggregate_scores",
    "ceu_unlearn",
    "conjugate_gradient",
    "eraser_unlearn",
    "gif_unlearn",
    "gnndelete_unlearn",
    "partition",
    "project_weights",
    "projector_unlearn",
    "residual",
    "retrain_oracle",
    "utu_unlearn",
]

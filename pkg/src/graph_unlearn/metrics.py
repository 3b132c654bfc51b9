"""Task metrics, profiling and the per-run report record."""

from __future__ import annotations

import hashlib
import json
import time
import tracemalloc
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .errors import LengthMismatch, SingleClass


def _pair(preds, labels):
    preds = np.asarray(preds, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if preds.shape != labels.shape:
        raise LengthMismatch(f"{len(preds)} predictions vs {len(labels)} labels")
    if preds.size == 0:
        raise LengthMismatch("empty input")
    return preds, labels


def accuracy(preds, labels):
    preds, labels = _pair(preds, labels)
    return float(np.mean(preds == labels))


class Precision(NamedTuple):
    value: float
    zero_division: bool  # True when nothing was predicted as the class


def precision(preds, labels, cls) -> Precision:
    preds, labels = _pair(preds, labels)
    predicted = preds == cls
    if not predicted.any():
        return Precision(0.0, True)
    return Precision(float(np.mean(labels[predicted] == cls)), False)


def f1(preds, labels, mode="micro"):
    """F1 over single-label multiclass predictions.

    micro pools TP/FP/FN over classes; macro averages per-class F1 over the
    classes present in either input, a class with no true support scoring 0.
    """
    preds, labels = _pair(preds, labels)
    classes = np.union1d(preds, labels)
    tp = np.array([np.sum((preds == c) & (labels == c)) for c in classes], dtype=np.float64)
    fp = np.array([np.sum((preds == c) & (labels != c)) for c in classes], dtype=np.float64)
    fn = np.array([np.sum((preds != c) & (labels == c)) for c in classes], dtype=np.float64)
    if mode == "micro":
        denom = 2 * tp.sum() + fp.sum() + fn.sum()
        return float(2 * tp.sum() / denom) if denom else 0.0
    if mode == "macro":
        denom = 2 * tp + fp + fn
        per = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
        return float(per.mean())
    raise ValueError(f"unknown F1 mode {mode!r}")


def auc(scores, labels):
    """ROC-AUC as the exact Mann-Whitney fraction, ties counting one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise LengthMismatch(f"{len(scores)} scores vs {len(labels)} labels")
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise SingleClass("AUC needs both positive and negative examples")
    return kernels.pairwise_auc(pos, neg)


# ---------------------------------------------------------------- profiling


def profile(run, *args, **kwargs):
    """Call ``run`` and measure monotonic wall time and peak traced allocation.

    Peak memory comes from tracemalloc, which numpy reports its buffers to;
    the figure is bytes above the level at call time.
    """
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    tracemalloc.reset_peak()
    base, _ = tracemalloc.get_traced_memory()
    start = time.perf_counter()
    try:
        result = run(*args, **kwargs)
    finally:
        wall = time.perf_counter() - start
        _, peak = tracemalloc.get_traced_memory()
        if not was_tracing:
            tracemalloc.stop()
    return {"wall_seconds": wall, "peak_bytes": max(0, peak - base), "probe": "tracemalloc", "result": result}


# ---------------------------------------------------------------- reports


def config_digest(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class MetricsReport:
    metrics: dict
    unlearn_seconds: float
    total_seconds: float
    peak_bytes: int
    seed: int
    config_digest: str
    method: str = ""
    backbone: str = ""
    task: str = ""
    request: str = ""
    level: Optional[float] = None
    memory_probe: str = "tracemalloc"
    attack: Optional[dict] = None
    extra: dict = field(default_factory=dict)

    TIMING_FIELDS = ("unlearn_seconds", "total_seconds", "peak_bytes")

    def to_json(self):
        return asdict(self)

    def deterministic_view(self):
        """Report without timing/memory fields, for reproducibility checks."""
        doc = self.to_json()
        for key in self.TIMING_FIELDS:
            doc.pop(key)
        return doc

    @classmethod
    def from_json(cls, doc):
        return cls(**doc)

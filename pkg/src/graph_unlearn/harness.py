"""Experiment orchestration: config, dataset ingestion, pipeline, sweeps and result files."""

from __future__ import annotations

import contextlib
import copy
import csv
import io
import json
import logging
import os
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import gnn
from .adversary import mia_auc, poison, poison_recovery
from .errors import (
    CGDiverged,
    InvalidRatio,
    IoError,
    ParseError,
    StageError,
    UnknownMethod,
    UnsupportedCombination,
)
from .graph import (
    DataSplit,
    Graph,
    UnlearnRequest,
    _round,
    build_graph,
    make_request,
    perturb,
    sample_non_edges,
    split_dataset,
    synth_graph_set,
    synth_sbm,
)
from .metrics import MetricsReport, accuracy, auc, config_digest, f1, profile
from .rng import derive_seed, stream
from .unlearn import (
    DeletionModel,
    ShardPlan,
    aggregate_predict,
    aggregate_scores,
    ceu_unlearn,
    eraser_unlearn,
    gif_unlearn,
    gnndelete_unlearn,
    partition,
    projector_unlearn,
    residual,
    utu_unlearn,
)
from .unlearn.eraser import touched_shards

logger = logging.getLogger(__name__)

METHODS = ("retrain", "eraser", "gif", "ceu", "gnndelete", "utu", "projector")
GRAPH_TASK_METHODS = ("retrain", "eraser", "gif")
PRIMARY_METRIC = {"node": "f1", "link": "auc", "graph": "f1"}
MAX_INTENSITY = 0.5

SBM_DEFAULTS = {"kind": "sbm", "n": 300, "num_classes": 3, "p_in": 0.1, "p_out": 0.01, "f": 32, "signal": 2.0}
GRAPH_SET_DEFAULTS = {
    "kind": "graph_set", "num_graphs": 60, "num_classes": 2, "min_nodes": 8, "max_nodes": 16,
    "p_edge": 0.3, "f": 16, "signal": 1.0,
}
METHOD_DEFAULTS = {
    "eraser": {"k": 4},
    "gif": {"damping": 1e-2, "cg_iters": 100, "cg_tol": 1e-8, "max_damping_retries": 3},
    "ceu": {"damping": 1e-2, "cg_iters": 100, "cg_tol": 1e-8, "max_damping_retries": 3},
    "gnndelete": {"epochs": 100, "alpha": 0.5, "lr": 0.05, "num_random": 16},
}


def _schema():
    return json.loads(resources.files(__package__).joinpath("config.schema.json").read_text())


# ---------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    """Validated experiment description with every default filled in."""

    doc: dict

    def __getattr__(self, name):
        try:
            return self.__dict__["doc"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def digest(self):
        return config_digest(self.doc)

    def to_json(self):
        return copy.deepcopy(self.doc)

    def dumps(self):
        return json.dumps(self.doc, sort_keys=True, indent=2) + "\n"

    def replace(self, **changes):
        doc = self.to_json()
        doc.update(copy.deepcopy(changes))
        return parse_config(doc)

    def spec(self):
        return gnn.BackboneSpec(self.backbone["name"], self.backbone["hops"])

    def hyper(self):
        return gnn.Hyper(**self.doc["hyper"])


def supported(method, task, kind, backbone="sgc"):
    if task == "graph":
        return kind == "feature" and method in GRAPH_TASK_METHODS
    if method == "ceu":
        return kind == "edge"
    if method == "projector":
        return kind == "node" and task == "node" and backbone == "sgc"
    if method == "gnndelete":
        return kind in ("node", "edge")
    return True


def parse_config(doc) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ParseError("config must be a JSON object")
    method = doc.get("method")
    if isinstance(method, str) and method not in METHODS:
        raise UnknownMethod(f"unknown method {method!r}; supported: {', '.join(METHODS)}")
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ParseError(f"{where}: {exc.message}") from None

    task = doc["task"]
    attacks = list(doc.get("attacks", []))
    base_data = GRAPH_SET_DEFAULTS if task == "graph" else SBM_DEFAULTS
    data_in = doc.get("dataset", {})
    dataset = dict(data_in) if data_in.get("kind") == "dir" else {**base_data, **data_in}
    dataset.setdefault("seed", doc["seed"])
    if dataset["kind"] == "dir" and "path" not in dataset:
        raise ParseError("dataset/path: required for directory datasets")
    if (task == "graph") != (dataset["kind"] == "graph_set"):
        raise UnsupportedCombination(f"task {task!r} cannot use a {dataset['kind']!r} dataset")

    default_kind = "feature" if task == "graph" else ("edge" if "poison" in attacks else "node")
    request = {"kind": default_kind, "ratio": 0.10, **doc.get("request", {})}
    if task == "graph":
        request.setdefault("feature_ratio", 0.10)

    out = {
        "dataset": dataset,
        "backbone": {"name": "sgc", "hops": 2, **doc.get("backbone", {})},
        "hyper": {**vars(gnn.Hyper()), **doc.get("hyper", {})},
        "task": task,
        "method": method,
        "method_options": {**METHOD_DEFAULTS.get(method, {}), **doc.get("method_options", {})},
        "request": request,
        "split": {"ratio": 0.8, "mode": "transductive", **doc.get("split", {})},
        "attacks": attacks,
        "attack_options": {"mia_members": "unlearned", "poison_ratio": 0.1, **doc.get("attack_options", {})},
        "perturbation": doc.get("perturbation"),
        "f1_mode": doc.get("f1_mode", "micro"),
        "seed": doc["seed"],
    }
    kind = request["kind"]
    if not supported(method, task, kind, out["backbone"]["name"]):
        raise UnsupportedCombination(
            f"method {method!r} does not support {kind} requests on the {task} task"
            f" with backbone {out['backbone']['name']!r}"
        )
    if "mia" in attacks and task != "node":
        raise UnsupportedCombination("membership inference is defined for the node task")
    if "poison" in attacks and (task != "link" or kind != "edge"):
        raise UnsupportedCombination("the poisoning audit needs the link task with edge requests")
    return ExperimentConfig(out)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return parse_config(doc)


# ---------------------------------------------------------------- datasets


def _read_csv(path):
    try:
        with open(path, newline="") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None


def load_dataset(directory) -> Graph:
    """Read ``nodes.csv`` (id,label,f0..) and ``edges.csv`` (src,dst); label -1 marks unlabeled."""
    directory = Path(directory)
    rows = _read_csv(directory / "nodes.csv")
    if not rows:
        raise ParseError("nodes.csv is empty")
    header = [h.strip() for h in rows[0]]
    width = len(header) - 2
    expected = ["id", "label"] + [f"f{i}" for i in range(width)]
    if width < 1 or header != expected:
        raise ParseError(f"nodes.csv header {','.join(header)!r} does not match id,label,f0,...")
    ids, labels, feats = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"nodes.csv line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            ids.append(int(row[0]))
            labels.append(int(row[1]))
            feats.append([float(v) for v in row[2:]])
        except ValueError as exc:
            raise ParseError(f"nodes.csv line {lineno}: {exc}") from None
    if not ids:
        raise ParseError("nodes.csv has no rows")
    order = np.argsort(ids, kind="stable")
    sorted_ids = np.asarray(ids)[order]
    bad = np.flatnonzero(sorted_ids != np.arange(len(ids)))
    if bad.size:
        raise ParseError(f"node ids must be exactly 0..{len(ids) - 1}; offending id {int(sorted_ids[bad[0]])}")
    labels = np.asarray(labels, dtype=np.int64)[order]
    if (labels < -1).any():
        raise ParseError(f"label {int(labels.min())} below -1")
    x = np.asarray(feats, dtype=np.float64)[order]

    erows = _read_csv(directory / "edges.csv")
    if not erows or [h.strip() for h in erows[0]] != ["src", "dst"]:
        raise ParseError("edges.csv header must be src,dst")
    edges = []
    for lineno, row in enumerate(erows[1:], start=2):
        try:
            u, v = (int(t) for t in row)
        except ValueError:
            raise ParseError(f"edges.csv line {lineno}: expected two integer ids") from None
        edges.append((u, v))
    labeled = labels >= 0
    return build_graph(x, labels, edges, labeled=None if labeled.all() else labeled)


def write_dataset(g: Graph, directory):
    """Inverse of load_dataset, for single labelled graphs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    labels = g.labels if g.labels is not None else np.full(g.n, -1)
    labels = np.where(g.label_mask(), labels, -1)
    with open(directory / "nodes.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"] + [f"f{i}" for i in range(g.num_features)])
        for i in range(g.n):
            w.writerow([i, int(labels[i])] + [repr(float(v)) for v in g.features[i]])
    with open(directory / "edges.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "dst"])
        w.writerows(g.edges.tolist())


def resolve_data_dir(flag: Optional[str]):
    """Explicit flag first, then GRAPH_UNLEARN_DATA, then the working directory."""
    return Path(flag or os.environ.get("GRAPH_UNLEARN_DATA") or ".")


def build_dataset(spec: dict, data_dir=None) -> Graph:
    kind = spec["kind"]
    if kind == "sbm":
        return synth_sbm(spec["n"], spec["num_classes"], spec["p_in"], spec["p_out"], spec["f"],
                         spec["signal"], derive_seed(spec["seed"], "dataset"))
    if kind == "graph_set":
        gs = synth_graph_set(spec["num_graphs"], spec["num_classes"], spec["min_nodes"], spec["max_nodes"],
                             spec["p_edge"], spec["f"], spec["signal"], derive_seed(spec["seed"], "dataset"))
        return gs.batch()
    path = Path(spec["path"])
    if not path.is_absolute():
        path = resolve_data_dir(data_dir) / path
    return load_dataset(path)


# ---------------------------------------------------------------- pipeline pieces


@contextlib.contextmanager
def stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass
class Fitted:
    """A model plus the graph it answers queries on; ``id_map`` sends original node ids there."""

    model: object
    graph: Graph
    id_map: Optional[np.ndarray] = None

    def _ids(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        return ids if self.id_map is None else self.id_map[ids]

    def proba(self, ids):
        ids = self._ids(ids) if not self.graph.is_batch else np.asarray(ids, dtype=np.int64)
        if isinstance(self.model, ShardPlan):
            return aggregate_predict(self.model, self.graph, ids)
        if isinstance(self.model, DeletionModel):
            return self.model.predict_proba(self.graph, ids)
        return gnn.predict_proba(self.model, self.graph, ids)

    def scores(self, pairs):
        pairs = self._ids(np.asarray(pairs, dtype=np.int64).reshape(-1, 2))
        if isinstance(self.model, ShardPlan):
            return aggregate_scores(self.model, self.graph, pairs)
        if isinstance(self.model, DeletionModel):
            return self.model.score_edges(self.graph, pairs)
        return gnn.score_edges(self.model, self.graph, pairs)


def inference_graph(g: Graph, split: DataSplit, task: str):
    return gnn.link_message_graph(g, split) if task == "link" else g


@dataclass
class Prepared:
    """Everything upstream of the unlearning request, shared across intensity levels."""

    cfg: ExperimentConfig
    graph: Graph  # graph the base model was trained on (perturbed / poisoned)
    clean: Graph  # graph before poisoning
    split: DataSplit
    base: object  # ModelParams, or ShardPlan for the partition method
    train_seed: int
    poison_edges: np.ndarray
    setup_seconds: float


def prepare(cfg: ExperimentConfig, data_dir=None) -> Prepared:
    start = time.perf_counter()
    seed = cfg.seed
    with stage("data"):
        g = build_dataset(cfg.dataset, data_dir)
    with stage("split"):
        split = split_dataset(g, cfg.split["ratio"], cfg.split["mode"], derive_seed(seed, "split"))
        if cfg.perturbation:
            kind, level = cfg.perturbation["kind"], cfg.perturbation["level"]
            # every level is a damage amount; sparsity of labels is applied as a keep ratio
            arg = 1.0 - level if kind == "label_sparsity" else level
            if kind == "label_sparsity" and level > 1:
                raise InvalidRatio(f"label_sparsity level {level} outside [0, 1]")
            g, _ = perturb(g, split, kind, arg, derive_seed(seed, "perturb"))
    clean = g
    poison_edges = np.zeros((0, 2), np.int64)
    if "poison" in cfg.attacks:
        with stage("attack"):
            g, poison_edges = poison(clean, cfg.attack_options["poison_ratio"], derive_seed(seed, "poison"),
                                     nodes=split.train_ids)
    train_seed = derive_seed(seed, "train")
    with stage("train"):
        if cfg.method == "eraser":
            base = partition(g, split, cfg.method_options["k"], cfg.spec(), cfg.hyper(), cfg.task, train_seed)
        else:
            base = gnn.train(cfg.spec(), g, split, cfg.task, cfg.hyper(), train_seed)
    return Prepared(cfg, g, clean, split, base, train_seed, poison_edges, time.perf_counter() - start)


def sample_request(prep: Prepared, ratio: float) -> Optional[UnlearnRequest]:
    """Seeded request at ``ratio`` over training data; None when nothing is requested."""
    cfg, g, split = prep.cfg, prep.graph, prep.split
    spec = cfg.request
    if spec.get("targets"):
        return make_request(spec["kind"], [tuple(t) if isinstance(t, list) and spec["kind"] == "edge" else t
                                           for t in spec["targets"]])
    if ratio == 0:
        return None
    rng = stream(cfg.seed, "request")
    kind = spec["kind"]
    if "poison" in cfg.attacks:
        return make_request("edge", [tuple(map(int, e)) for e in prep.poison_edges])
    if cfg.task == "graph":
        train_graphs = np.asarray(split.train_ids, dtype=np.int64)
        picked = np.sort(rng.choice(train_graphs, size=max(1, _round(0.5 * len(train_graphs))), replace=False))
        dims = list(range(g.num_features))
        targets = []
        for gid in picked:
            nodes = np.flatnonzero(g.node_graph == gid)
            count = max(1, _round(spec["feature_ratio"] * len(nodes)))
            targets += [(int(v), dims) for v in np.sort(rng.choice(nodes, size=count, replace=False))]
        return make_request("feature", targets)
    nodes = np.asarray(split.train_ids, dtype=np.int64)
    if cfg.task == "node":
        nodes = nodes[g.label_mask()[nodes]]
    if kind == "edge":
        in_train = np.zeros(g.n, dtype=bool)
        in_train[split.train_ids] = True
        pool = g.edges[in_train[g.edges[:, 0]] & in_train[g.edges[:, 1]]]
        count = max(1, _round(ratio * len(pool)))
        pick = np.sort(rng.choice(len(pool), size=min(count, len(pool)), replace=False))
        return make_request("edge", [tuple(map(int, e)) for e in pool[pick]])
    count = max(1, _round(ratio * len(nodes)))
    picked = np.sort(rng.choice(nodes, size=min(count, len(nodes)), replace=False))
    if kind == "node":
        return make_request("node", [int(v) for v in picked])
    dims = list(range(g.num_features))
    return make_request("feature", [(int(v), dims) for v in picked])


def _with_damping(run, opts):
    damping = opts["damping"]
    for attempt in range(opts["max_damping_retries"] + 1):
        try:
            return run(damping), damping
        except CGDiverged:
            if attempt == opts["max_damping_retries"]:
                raise
            logger.warning("CG did not converge at damping %.0e; retrying with %.0e", damping, damping * 10)
            damping *= 10
    raise AssertionError("unreachable")


def unlearn(prep: Prepared, request: UnlearnRequest):
    """Apply the configured method; returns (Fitted, extra info)."""
    cfg, g, split, task = prep.cfg, prep.graph, prep.split, prep.cfg.task
    opts = cfg.method_options
    g2, split2, id_map = residual(g, split, request)
    if request.kind != "node" or g.is_batch:
        id_map = None
    after = inference_graph(g2, split2, task)
    method = cfg.method
    extra = {}
    if method == "retrain":
        model = gnn.train(cfg.spec(), g2, split2, task, cfg.hyper(), prep.train_seed)
        return Fitted(model, after, id_map), extra
    if method == "eraser":
        extra["retrained_shards"] = touched_shards(prep.base, g, request)
        plan = eraser_unlearn(prep.base, g, request, split)
        return Fitted(plan, after, id_map), extra
    if method in ("gif", "ceu"):
        fn = gif_unlearn if method == "gif" else ceu_unlearn
        model, damping = _with_damping(
            lambda d: fn(prep.base, g, split, request, task, weight_decay=cfg.hyper().weight_decay,
                         damping=d, cg_iters=opts["cg_iters"], cg_tol=opts["cg_tol"], seed=prep.train_seed),
            opts,
        )
        extra["damping"] = damping
        return Fitted(model, after, id_map), extra
    if method == "projector":
        return Fitted(projector_unlearn(prep.base, g, split, request), after, id_map), extra
    base_graph = inference_graph(g, split, task)
    if method == "utu":
        return Fitted(prep.base, utu_unlearn(base_graph, request)), extra
    if method == "gnndelete":
        model = gnndelete_unlearn(prep.base, base_graph, request, epochs=opts["epochs"], alpha=opts["alpha"],
                                  lr=opts["lr"], seed=derive_seed(cfg.seed, "gnndelete"),
                                  num_random=opts["num_random"])
        return Fitted(model, base_graph), extra
    raise UnknownMethod(method)


def _removed_nodes(request):
    if request is None or request.kind != "node":
        return np.zeros(0, np.int64)
    return np.array(sorted(request.delta_v), dtype=np.int64)


def link_eval_pairs(clean: Graph, split: DataSplit, request, seed):
    """Held-out positives (edges touching a test node) and as many seeded non-edges.

    Pairs touching nodes removed by the request are excluded.
    """
    in_test = np.zeros(clean.n, dtype=bool)
    in_test[split.test_ids] = True
    alive = np.ones(clean.n, dtype=bool)
    alive[_removed_nodes(request)] = False
    e = clean.edges
    pos = e[(in_test[e[:, 0]] | in_test[e[:, 1]]) & alive[e[:, 0]] & alive[e[:, 1]]]
    neg = sample_non_edges(
        clean, len(pos), stream(seed, "eval", "negatives"),
        predicate=lambda u, v: (in_test[u] or in_test[v]) and alive[u] and alive[v],
    )
    return pos, neg


def evaluate(fitted: Fitted, prep: Prepared, request, eval_pairs=None):
    cfg, g, split = prep.cfg, prep.graph, prep.split
    if cfg.task == "link":
        pos, neg = eval_pairs
        scores = np.concatenate([fitted.scores(pos), fitted.scores(neg)])
        labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
        return {"auc": auc(scores, labels)}
    if cfg.task == "graph":
        ids = np.asarray(split.test_ids, dtype=np.int64)
        truth = g.graph_labels[ids]
    else:
        ids = np.asarray(split.test_ids, dtype=np.int64)
        ids = ids[g.label_mask()[ids]]
        truth = g.labels[ids]
    preds = np.argmax(fitted.proba(ids), axis=1)
    return {"f1": f1(preds, truth, cfg.f1_mode), "accuracy": accuracy(preds, truth)}


def _mia_members(prep: Prepared, request):
    g, split = prep.graph, prep.split
    if prep.cfg.attack_options["mia_members"] == "train" or request is None:
        ids = np.asarray(split.train_ids, dtype=np.int64)
    else:
        ids = request.seed_nodes()
    return ids[g.label_mask()[ids]]


def run_attacks(prep: Prepared, base: Fitted, fitted: Fitted, request, eval_pairs):
    cfg, g, split = prep.cfg, prep.graph, prep.split
    if "mia" in cfg.attacks:
        members = _mia_members(prep, request)
        nonmembers = np.asarray(split.test_ids, dtype=np.int64)
        nonmembers = nonmembers[g.label_mask()[nonmembers]]
        # the attacker queries the pre-request graph; structural unlearning edits that graph itself
        probe = fitted if cfg.method == "utu" else Fitted(fitted.model, inference_graph(g, split, cfg.task))
        seed = derive_seed(cfg.seed, "attack")
        after = mia_auc(probe.proba, g, members, nonmembers, seed=seed)
        before = mia_auc(base.proba, g, members, nonmembers, seed=seed)
        after.auc_before, after.auc_after = before.auc, after.auc
        return after.to_json()
    if "poison" in cfg.attacks:
        pos, neg = eval_pairs
        rep = poison_recovery(base.scores, fitted.scores, prep.clean, pos, neg, prep.poison_edges,
                              seed=derive_seed(cfg.seed, "poison"))
        return rep.to_json()
    return None


def _report(cfg, metrics, attack, unlearn_seconds, total_seconds, peak, request, level, extra):
    return MetricsReport(
        metrics=metrics,
        unlearn_seconds=unlearn_seconds,
        total_seconds=total_seconds,
        peak_bytes=int(peak),
        seed=cfg.seed,
        config_digest=cfg.digest,
        method=cfg.method,
        backbone=cfg.backbone["name"],
        task=cfg.task,
        request=cfg.request["kind"],
        level=level,
        attack=attack,
        extra={"request_size": 0 if request is None else request.size, **extra},
    )


def run_with(prep: Prepared, ratio: float, level=None) -> MetricsReport:
    """Request, unlearn, evaluate and audit on top of a prepared base model."""
    start = time.perf_counter()
    cfg = prep.cfg
    base_graph = inference_graph(prep.graph, prep.split, cfg.task)
    base = Fitted(prep.base, base_graph)
    with stage("request"):
        request = sample_request(prep, ratio)
    eval_pairs = None
    if cfg.task == "link":
        with stage("evaluate"):
            eval_pairs = link_eval_pairs(prep.clean, prep.split, request, derive_seed(cfg.seed, "eval"))
    with stage("evaluate"):
        base_metrics = evaluate(base, prep, None, eval_pairs)
    if request is None:
        fitted, extra, seconds, peak = base, {}, 0.0, 0
    else:
        with stage("unlearn"):
            prof = profile(unlearn, prep, request)
        (fitted, extra), seconds, peak = prof["result"], prof["wall_seconds"], prof["peak_bytes"]
    with stage("evaluate"):
        metrics = evaluate(fitted, prep, request, eval_pairs)
    metrics.update({f"base_{k}": v for k, v in base_metrics.items()})
    with stage("attack"):
        attack = run_attacks(prep, base, fitted, request, eval_pairs)
    total = prep.setup_seconds + time.perf_counter() - start
    return _report(cfg, metrics, attack, seconds, total, peak, request, level, extra)


def run_experiment(cfg: ExperimentConfig, data_dir=None) -> MetricsReport:
    level = cfg.perturbation["level"] if cfg.perturbation else None
    return run_with(prepare(cfg, data_dir), cfg.request["ratio"], level)


def sweep_intensity(cfg: ExperimentConfig, ratios, data_dir=None):
    """One report per request ratio, all on the same base model; ratio 0 reports the base model."""
    ratios = [float(r) for r in ratios]
    if any(not (0.0 <= r <= MAX_INTENSITY) for r in ratios):
        raise InvalidRatio(f"ratios must lie in [0, {MAX_INTENSITY}]")
    if ratios != sorted(ratios):
        raise InvalidRatio("ratios must be sorted ascending")
    prep = prepare(cfg, data_dir)
    return [run_with(prep, r, level=r) for r in ratios]


def sweep_perturbation(cfg: ExperimentConfig, kind, levels, data_dir=None):
    """Retrain and unlearn under each perturbation level; level 0 is the clean pipeline."""
    reports = []
    for level in levels:
        level = float(level)
        if level < 0 or (kind != "feature_noise" and level > 1):
            raise InvalidRatio(f"{kind} level {level} out of range")
        run_cfg = cfg.replace(perturbation={"kind": kind, "level": level})
        reports.append(run_experiment(run_cfg, data_dir))
    return reports


# ---------------------------------------------------------------- output


SUMMARY_COLUMNS = ("method", "backbone", "task", "request", "level", "metric", "value",
                   "unlearn_seconds", "peak_bytes", "seed")


def _fmt(v):
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def summary_rows(reports):
    rows = []
    for r in reports:
        metric = PRIMARY_METRIC[r.task]
        rows.append([r.method, r.backbone, r.task, r.request, _fmt(r.level), metric, _fmt(r.metrics[metric]),
                     _fmt(r.unlearn_seconds), str(r.peak_bytes), str(r.seed)])
    return rows


def series_rows(reports):
    return [[_fmt(r.level), _fmt(r.metrics[PRIMARY_METRIC[r.task]]), r.method] for r in reports]


def emit_report(reports, out_dir, series=None):
    """Write results.jsonl, summary.csv and one series_<name>.csv per entry of ``series``."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to write")
    out_dir = Path(out_dir)
    files = {
        "results.jsonl": "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in reports),
        "summary.csv": _csv_text(SUMMARY_COLUMNS, summary_rows(reports)),
    }
    for name, items in (series or {}).items():
        files[f"series_{name}.csv"] = _csv_text(("x", "y", "method"), series_rows(items))
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out_dir / name).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write results to {out_dir}: {exc}") from exc
    return [out_dir / name for name in files]


def write_summary(reports, out_dir):
    """Only summary.csv; used to re-summarize a tree of existing runs."""
    path = Path(out_dir) / "summary.csv"
    try:
        path.write_text(_csv_text(SUMMARY_COLUMNS, summary_rows(reports)))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def read_reports(path):
    path = Path(path)
    files = [path] if path.is_file() else sorted(path.rglob("results.jsonl"))
    reports = []
    try:
        for fp in files:
            for line in fp.read_text().splitlines():
                if line.strip():
                    reports.append(MetricsReport.from_json(json.loads(line)))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except (json.JSONDecodeError, TypeError) as exc:
        raise ParseError(f"malformed results file under {path}: {exc}") from exc
    return reports


def run_dir(root, cfg: ExperimentConfig, suffix=""):
    return Path(root) / (cfg.digest[:16] + suffix)


__all__ = [
    "ExperimentConfig",
    "Fitted",
    "METHODS",
    "emit_report",
    "load_config",
    "load_dataset",
    "parse_config",
    "prepare",
    "read_reports",
    "run_experiment",
    "supported",
    "sweep_intensity",
    "sweep_perturbation",
    "write_dataset",
    "write_summary",
]

"""End-to-end acceptance checks, one per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v -s`` or ``python3 tests/test_acceptance.py``.
"""

import json
import time

import numpy as np
import pytest

from graph_unlearn import gnn, harness
from graph_unlearn.gnn import BackboneSpec, Hyper
from graph_unlearn.graph import build_graph, make_request, split_dataset, synth_graph_set, synth_sbm
from graph_unlearn.metrics import accuracy, auc, f1
from graph_unlearn.rng import stream
from graph_unlearn.unlearn import (
    ceu_unlearn,
    eraser_unlearn,
    gif_unlearn,
    partition,
    project_weights,
    projector_unlearn,
    residual,
    retrain_oracle,
)
from graph_unlearn.unlearn.eraser import touched_shards
from graph_unlearn.unlearn.projector import row_space_basis


def timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


# 1: gradients and Hessian-vector products


def _small(task, seed):
    if task == "graph":
        g = synth_graph_set(5, 2, 3, 5, 0.5, 4, signal=1.0, seed=seed).batch()
    else:
        g = synth_sbm(20, 2, 0.3, 0.1, 4, signal=1.0, seed=seed)
    return g, split_dataset(g, 0.7, seed=seed)


def criterion_1():
    worst_rel, worst_sym = 0.0, 0.0
    start = time.perf_counter()
    for bb in ("gcn", "sgc", "sage"):
        for hops in (1, 2):
            for task in ("node", "link", "graph"):
                g, s = _small(task, hops)
                spec = BackboneSpec(bb, hops)
                p = gnn.init_params(spec, g.num_features, 5, gnn.output_dim(g, task, Hyper(hidden=5)), 7)
                p = p.with_flat(p.flat() + 0.3 * stream(7, "jitter").standard_normal(p.num_params))
                theta = p.flat()
                analytic = gnn.grad(p, g, s, task, weight_decay=1e-2, seed=0)
                eps = 1e-6
                numeric = np.empty_like(theta)
                for i in range(len(theta)):
                    e = np.zeros_like(theta)
                    e[i] = eps
                    up = gnn.loss(p.with_flat(theta + e), g, s, task, weight_decay=1e-2, seed=0)
                    dn = gnn.loss(p.with_flat(theta - e), g, s, task, weight_decay=1e-2, seed=0)
                    numeric[i] = (up - dn) / (2 * eps)
                rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-6)
                worst_rel = max(worst_rel, rel.max())
                u, v = stream(7, "uv").standard_normal((2, p.num_params))
                hu = gnn.hvp(p, g, s, task, u, weight_decay=1e-2, seed=0)
                hv = gnn.hvp(p, g, s, task, v, weight_decay=1e-2, seed=0)
                worst_sym = max(worst_sym, abs(u @ hv - v @ hu))
    seconds = time.perf_counter() - start
    ok = worst_rel <= 1e-3 and worst_sym <= 1e-7 and seconds < 10
    return ok, f"max rel grad err {worst_rel:.2e}, max hvp asymmetry {worst_sym:.2e}, {seconds:.1f}s"


# 2: metric oracles


def criterion_2():
    rng = stream(0, "metric-oracles")
    start = time.perf_counter()
    worst_auc, worst_f1 = 0.0, 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        labels = rng.integers(0, 2, n)
        labels[rng.integers(n)] = 0
        labels[(rng.integers(n - 1) + 1 + np.flatnonzero(labels == 0)[0]) % n] = 1
        # coarse grid forces ties
        scores = rng.integers(0, 8, n) / 7.0
        pos, neg = scores[labels == 1], scores[labels == 0]
        brute = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg) / (len(pos) * len(neg))
        worst_auc = max(worst_auc, abs(auc(scores, labels) - brute))
    for _ in range(1000):
        n = int(rng.integers(1, 80))
        k = int(rng.integers(2, 7))
        preds, labels = rng.integers(0, k, n), rng.integers(0, k, n)
        worst_f1 = max(worst_f1, abs(f1(preds, labels, "micro") - accuracy(preds, labels)))
    seconds = time.perf_counter() - start
    ok = worst_auc <= 1e-12 and worst_f1 <= 1e-12 and seconds < 10
    return ok, f"max auc err {worst_auc:.1e}, max micro-f1 vs accuracy {worst_f1:.1e}, {seconds:.1f}s"


# 3: retained-data reasoning

NODE_METHODS = ("retrain", "eraser", "gif", "gnndelete", "utu", "projector")


def criterion_3():
    start = time.perf_counter()
    scores = {}
    base = None
    for method in NODE_METHODS:
        rep = harness.run_experiment(harness.parse_config({"method": method, "task": "node", "seed": 0}))
        scores[method] = rep.metrics["f1"]
        if method == "retrain":
            base = rep.metrics["base_f1"]
    seconds = time.perf_counter() - start
    gaps = {m: abs(scores[m] - scores["retrain"]) for m in NODE_METHODS}
    ok = base >= 0.85 and max(gaps.values()) <= 0.10 and seconds < 120
    shown = ", ".join(f"{m} {scores[m]:.3f}" for m in NODE_METHODS)
    return ok, f"base f1 {base:.3f}; after request: {shown}; {seconds:.1f}s"


# 4: influence fidelity


def _logistic_instance(seed):
    rng = stream(seed, "surrogate")
    y = rng.integers(0, 2, 200)
    x = rng.standard_normal((200, 10)) + 0.8 * (2 * y[:, None] - 1)
    return build_graph(x, y)


def criterion_4():
    start = time.perf_counter()
    spec, hy = BackboneSpec("sgc", 0), Hyper(lr=1.0, epochs=2000, weight_decay=1e-2)
    gif_wins = 0
    for seed in range(10):
        g = _logistic_instance(seed)
        s = split_dataset(g, 1.0, seed=seed)
        p = gnn.train(spec, g, s, "node", hy, seed)
        targets = stream(seed, "request").choice(s.train_ids, 5, replace=False)
        r = make_request("node", [int(t) for t in targets])
        oracle = retrain_oracle(spec, g, s, r, "node", hy, seed)
        updated = gif_unlearn(p, g, s, r, "node", weight_decay=hy.weight_decay, seed=seed)
        gif_wins += np.linalg.norm(updated.flat() - oracle.flat()) < np.linalg.norm(p.flat() - oracle.flat())

    spec, hy = BackboneSpec("sgc", 1), Hyper(lr=0.5, epochs=2000, weight_decay=1e-2, hidden=4)
    ceu_wins = 0
    for seed in range(10):
        g = synth_sbm(100, 2, 0.2, 0.02, 6, signal=1.0, seed=seed)
        s = split_dataset(g, 1.0, seed=seed)
        p = gnn.train(spec, g, s, "link", hy, seed)
        idx = stream(seed, "request").choice(g.m, 5, replace=False)
        r = make_request("edge", [tuple(map(int, g.edges[i])) for i in idx])
        oracle = retrain_oracle(spec, g, s, r, "link", hy, seed)
        updated = ceu_unlearn(p, g, s, r, "link", weight_decay=hy.weight_decay, seed=seed)
        ceu_wins += np.linalg.norm(updated.flat() - oracle.flat()) < np.linalg.norm(p.flat() - oracle.flat())
    seconds = time.perf_counter() - start
    ok = gif_wins >= 9 and ceu_wins >= 9 and seconds < 60
    return ok, f"gif closer in {gif_wins}/10, ceu closer in {ceu_wins}/10, {seconds:.1f}s"


# 5: forgetting audit

OVERFIT = {
    "method": "retrain", "task": "node", "seed": 0, "attacks": ["mia"],
    "dataset": {"f": 128},
    "backbone": {"name": "sage", "hops": 2},
    "hyper": {"epochs": 500, "weight_decay": 0.0, "lr": 0.5, "hidden": 256},
    "attack_options": {"mia_members": "train"},
    "request": {"ratio": 0.0},
}


def criterion_5():
    start = time.perf_counter()
    oracle = harness.run_experiment(harness.parse_config(
        {"method": "retrain", "task": "node", "seed": 0, "attacks": ["mia"]}))
    overfit = harness.run_experiment(harness.parse_config(OVERFIT))
    seconds = time.perf_counter() - start
    a, b = oracle.attack["auc"], overfit.attack["auc"]
    ok = 0.40 <= a <= 0.60 and b >= 0.55 and seconds < 120
    return ok, f"oracle unlearned-vs-test mia {a:.3f}, overfit train-vs-test mia {b:.3f}, {seconds:.1f}s"


# 6: poison recovery

POISON = {
    "task": "link", "attacks": ["poison"],
    "dataset": {"num_classes": 5, "p_in": 0.1, "p_out": 0.003, "signal": 1.0, "f": 8},
    "backbone": {"name": "sgc", "hops": 3},
    "hyper": {"lr": 0.2, "hidden": 16, "weight_decay": 5e-3},
}


def criterion_6():
    start = time.perf_counter()
    deltas = {}
    for method in ("retrain", "eraser", "gif", "utu"):
        for seed in range(3):
            rep = harness.run_experiment(harness.parse_config({**POISON, "method": method, "seed": seed}))
            deltas[(method, seed)] = rep.attack["auc_after"] - rep.attack["auc_before"]
    seconds = time.perf_counter() - start
    worst = min(deltas.values())
    ok = worst >= 0 and seconds < 180
    per = ", ".join(f"{m} {min(d for (mm, _), d in deltas.items() if mm == m):+.4f}"
                    for m in ("retrain", "eraser", "gif", "utu"))
    return ok, f"min auc gain per method over seeds 0-2: {per}; {seconds:.1f}s"


# 7: partition efficiency


def criterion_7():
    g = synth_sbm(1000, 3, 0.1, 0.01, 32, signal=2.0, seed=0)
    s = split_dataset(g, 0.8, seed=0)
    spec, hy = BackboneSpec("gcn", 2), Hyper()
    plan = partition(g, s, 8, spec, hy, "node", 0)
    r = make_request("node", [int(s.train_ids[5])])
    new, t_eraser = timed(lambda: eraser_unlearn(plan, g, r, s))
    _, t_retrain = timed(lambda: retrain_oracle(spec, g, s, r, "node", hy, 0))
    changed = [i for i in range(8) if new.models[i].dumps() != plan.models[i].dumps()]
    touched = set(touched_shards(plan, g, r))
    untouched_equal = all(new.models[i].dumps() == plan.models[i].dumps() for i in range(8) if i not in touched)
    ratio = t_eraser / t_retrain
    ok = ratio <= 0.5 and untouched_equal
    return ok, (f"eraser {t_eraser:.3f}s vs retrain {t_retrain:.3f}s (ratio {ratio:.3f}); "
                f"retrained shards {changed}, others byte-identical: {untouched_equal}")


# 8: projector exactness


def criterion_8():
    base = synth_sbm(200, 3, 0.1, 0.01, 16, signal=2.0, seed=0)
    rng = stream(0, "low-rank")
    # features confined to a 5-dimensional subspace, so the complement is nontrivial
    latent = rng.standard_normal((base.n, 5)) + 2.0 * rng.standard_normal((3, 5))[base.labels]
    x = latent @ rng.standard_normal((5, 16))
    g = build_graph(x, base.labels, base.edges)
    s = split_dataset(g, 0.8, seed=0)
    spec = BackboneSpec("sgc", 2)
    p = gnn.train(spec, g, s, "node", Hyper(epochs=100), 0)
    r = make_request("node", [int(t) for t in s.train_ids[:20]])
    new = projector_unlearn(p, g, s, r)
    g2, s2, _ = residual(g, s, r)
    f_r = gnn.propagate(g2.features, gnn.normalized_adjacency(g2), 2)[s2.train_ids]
    q = row_space_basis(f_r)
    worst = 0.0
    for _ in range(100):
        v = rng.standard_normal(16)
        v -= q @ (q.T @ v)
        v /= np.linalg.norm(v)
        worst = max(worst, np.linalg.norm(v @ new.weights[0]))
    again = projector_unlearn(new, g, s, r)
    idem = float(np.abs(again.weights[0] - new.weights[0]).max())
    reproj = float(np.abs(project_weights(new.weights[0], f_r) - new.weights[0]).max())
    ok = worst <= 1e-6 and idem <= 1e-12 and reproj <= 1e-12
    return ok, f"rank {q.shape[1]}/16, max |v^T W'| {worst:.1e}, re-projection change {max(idem, reproj):.1e}"


# 9: robustness analogue


def criterion_9():
    start = time.perf_counter()
    drops = {}
    for method in ("retrain", "gif"):
        cfg = harness.parse_config({"method": method, "task": "node", "seed": 0})
        reps = harness.sweep_perturbation(cfg, "label_noise", [0.0, 0.2, 0.4, 0.8])
        drops[method] = [r.metrics["f1"] for r in reps]
    seconds = time.perf_counter() - start
    ok = all(v[0] - v[-1] >= 0.3 for v in drops.values()) and seconds < 300
    shown = "; ".join(f"{m} f1 " + " ".join(f"{x:.3f}" for x in v) for m, v in drops.items())
    return ok, f"{shown} (levels 0, 0.2, 0.4, 0.8); {seconds:.1f}s"


# 10: determinism


def _stable_lines(path):
    out = []
    for line in path.read_text().splitlines():
        doc = json.loads(line)
        for key in harness.MetricsReport.TIMING_FIELDS:
            doc.pop(key)
        out.append(json.dumps(doc, sort_keys=True))
    return out


def criterion_10(tmp_dir):
    cfg = harness.parse_config({"method": "gif", "task": "node", "seed": 4, "attacks": ["mia"]})
    for name in ("a", "b"):
        harness.emit_report([harness.run_experiment(cfg)], tmp_dir / name)
    a, b = _stable_lines(tmp_dir / "a" / "results.jsonl"), _stable_lines(tmp_dir / "b" / "results.jsonl")
    ok = a == b and json.loads(a[0])["config_digest"] == cfg.digest
    return ok, f"metric fields identical: {a == b}, digest {cfg.digest[:12]}"


# pytest entry points


def _check(number, result, capsys):
    ok, detail = result
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


@pytest.mark.parametrize("number", range(1, 10))
def test_criterion(number, capsys):
    _check(number, globals()[f"criterion_{number}"](), capsys)


def test_criterion_10(tmp_path, capsys):
    _check(10, criterion_10(tmp_path), capsys)


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    failed = 0
    for n in range(1, 11):
        res = criterion_10(Path(tempfile.mkdtemp())) if n == 10 else globals()[f"criterion_{n}"]()
        failed += not res[0]
        print(f"criterion {n}: {'PASS' if res[0] else 'FAIL'} - {res[1]}", flush=True)
    raise SystemExit(1 if failed else 0)

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graph_unlearn.errors import (
    EmptyRequest,
    InvalidProbability,
    InvalidRatio,
    KindMismatch,
    MissingTarget,
    NonFinite,
    OutOfRange,
    ShapeMismatch,
)
from graph_unlearn.graph import (
    DataSplit,
    GraphSet,
    apply_request,
    build_graph,
    incident_edges,
    induced_subgraph,
    k_hop,
    make_request,
    perturb,
    sample_non_edges,
    split_dataset,
    synth_graph_set,
    synth_sbm,
    training_view,
    validate_request,
)
from graph_unlearn.rng import derive_seed, stream


def path_graph(n, f=2):
    return build_graph(np.ones((n, f)), np.zeros(n, dtype=int), [(i, i + 1) for i in range(n - 1)])


def triangle():
    return build_graph(np.eye(3), [0, 1, 0], [(0, 1), (1, 2), (0, 2)])


# build_graph


def test_build_graph_counts():
    g = build_graph(np.eye(3), None, [(0, 1), (1, 2)])
    assert (g.n, g.m) == (3, 2)


def test_build_graph_dedups_reversed_pairs():
    g = build_graph(np.eye(3), None, [(0, 1), (1, 0)])
    assert g.m == 1
    assert g.edges.tolist() == [[0, 1]]


def test_build_graph_rejects_out_of_range_endpoint():
    with pytest.raises(OutOfRange):
        build_graph(np.eye(3), None, [(0, 5)])


def test_build_graph_drops_self_loops_with_count():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        g = build_graph(np.eye(3), None, [(0, 0), (1, 1), (0, 1)])
    assert g.m == 1
    assert any("2 self-loop" in str(w.message) for w in caught)


def test_build_graph_validation_errors():
    with pytest.raises(ShapeMismatch):
        build_graph(np.eye(3), [0, 1], [])
    x = np.eye(3)
    x[1, 1] = np.nan
    with pytest.raises(NonFinite):
        build_graph(x, None, [])
    with pytest.raises(OutOfRange):
        build_graph(np.eye(3), [0, 1, 2], [], num_classes=2)


def test_graph_set_batch_is_disjoint_union():
    gs = synth_graph_set(5, 2, 3, 6, 0.5, 4, seed=1)
    b = gs.batch()
    assert b.n == sum(g.n for g in gs.graphs)
    assert b.m == sum(g.m for g in gs.graphs)
    assert b.num_graphs == 5
    # edges never cross member graphs
    assert np.all(b.node_graph[b.edges[:, 0]] == b.node_graph[b.edges[:, 1]])


def test_graph_set_label_length_checked():
    gs = synth_graph_set(3, 2, 3, 4, 0.5, 4, seed=1)
    with pytest.raises(ShapeMismatch):
        GraphSet(gs.graphs, np.array([0, 1]))


# splits


def test_split_counts_and_disjoint():
    g = path_graph(10)
    s = split_dataset(g, 0.8, seed=7)
    assert len(s.train_ids) == 8 and len(s.test_ids) == 2
    assert not set(s.train_ids) & set(s.test_ids)


def test_split_full_ratio_and_determinism():
    g = path_graph(10)
    s = split_dataset(g, 1.0, seed=3)
    assert len(s.train_ids) == 10 and len(s.test_ids) == 0
    a, b = split_dataset(g, 0.6, seed=5), split_dataset(g, 0.6, seed=5)
    assert np.array_equal(a.train_ids, b.train_ids)


def test_split_rejects_bad_ratio():
    with pytest.raises(InvalidRatio):
        split_dataset(path_graph(4), 1.5)


@given(st.integers(1, 60), st.floats(0, 1), st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_split_size_is_rounded_ratio(n, ratio, seed):
    g = build_graph(np.zeros((n, 1)))
    s = split_dataset(g, ratio, seed=seed)
    assert len(s.train_ids) == int(np.floor(ratio * n + 0.5))
    assert sorted(np.concatenate([s.train_ids, s.test_ids]).tolist()) == list(range(n))


def test_inductive_view_drops_test_nodes_and_edges():
    g = path_graph(5)
    split = DataSplit(np.array([0, 1, 3]), np.array([2, 4]), "inductive")
    view, vsplit, ids = training_view(g, split)
    assert ids.tolist() == [0, 1, 3]
    assert view.m == 1  # only 0-1 survives
    assert vsplit.train_ids.tolist() == [0, 1, 2]


# requests


def test_make_request_levels():
    r = make_request("node", [3])
    assert r.delta_v == {3} and not r.delta_e and not r.delta_x and r.size == 1
    r = make_request("feature", [(1, {0, 4}), (2, {0, 4})])
    assert r.size == 2 and r.delta_x == ((1, (0, 4)), (2, (0, 4)))


def test_make_request_errors():
    with pytest.raises(KindMismatch):
        make_request("edge", [0, 1])
    with pytest.raises(EmptyRequest):
        make_request("node", [])


def test_apply_node_request_on_path():
    g2, id_map = apply_request(path_graph(3), make_request("node", [1]))
    assert (g2.n, g2.m) == (2, 0)
    assert id_map.tolist() == [0, -1, 1]


def test_apply_edge_request_on_triangle():
    g2, _ = apply_request(triangle(), make_request("edge", [(0, 1)]))
    assert (g2.n, g2.m) == (3, 2)


def test_apply_feature_request_masks_dims():
    g = build_graph([[1.0, 1.0], [2.0, 3.0]])
    g2, _ = apply_request(g, make_request("feature", [(1, [0])]))
    assert g2.features.tolist() == [[1.0, 1.0], [0.0, 3.0]]
    assert g.features[1, 0] == 2.0  # input untouched


def test_apply_request_missing_target():
    with pytest.raises(MissingTarget):
        apply_request(triangle(), make_request("node", [7]))
    with pytest.raises(MissingTarget):
        apply_request(path_graph(3), make_request("edge", [(0, 2)]))


def test_edge_request_idempotent():
    g = triangle()
    r = make_request("edge", [(0, 1)])
    once, _ = apply_request(g, r)
    twice, _ = apply_request(once, r, strict=False)
    assert np.array_equal(once.edges, twice.edges)


def test_requests_limited_to_training_nodes():
    g = path_graph(4)
    split = DataSplit(np.array([0, 1]), np.array([2, 3]))
    validate_request(g, make_request("node", [1]), split)
    with pytest.raises(MissingTarget):
        validate_request(g, make_request("node", [3]), split)


@given(st.integers(0, 10**6), st.integers(1, 5))
@settings(max_examples=40, deadline=None)
def test_node_removal_edge_count(seed, k):
    g = synth_sbm(30, 3, 0.3, 0.05, 3, seed=seed)
    victims = stream(seed, "victims").choice(g.n, size=k, replace=False)
    g2, _ = apply_request(g, make_request("node", [int(v) for v in victims]))
    # brute-force incident count
    hit = sum(1 for u, v in g.edges.tolist() if u in victims or v in victims)
    assert g2.m == g.m - hit
    assert len(incident_edges(g, victims)) == hit


def test_k_hop_on_path():
    g = path_graph(5)
    assert k_hop(g, [0], 2).tolist() == [0, 1, 2]
    assert k_hop(g, [2], 0).tolist() == [2]


def test_induced_subgraph_relabels():
    g = path_graph(5)
    sub = induced_subgraph(g, [1, 2, 4])
    assert sub.n == 3 and sub.edges.tolist() == [[0, 1]]


# synthetic data


def test_sbm_p_out_zero_is_homophilous():
    g = synth_sbm(60, 3, 0.3, 0.0, 4, seed=2)
    assert np.all(g.labels[g.edges[:, 0]] == g.labels[g.edges[:, 1]])


def test_sbm_edge_count_within_binomial_band():
    g = synth_sbm(100, 2, 0.2, 0.0, 2, seed=11)
    pairs = 2 * (50 * 49 // 2)
    mean, sd = pairs * 0.2, np.sqrt(pairs * 0.2 * 0.8)
    assert abs(g.m - mean) <= 4 * sd
    assert abs(mean - 490) < 1e-9


def test_sbm_deterministic_and_balanced():
    a, b = synth_sbm(40, 4, 0.2, 0.05, 4, seed=9), synth_sbm(40, 4, 0.2, 0.05, 4, seed=9)
    assert np.array_equal(a.edges, b.edges) and np.array_equal(a.features, b.features)
    assert np.bincount(a.labels).tolist() == [10, 10, 10, 10]


def test_sbm_probability_errors():
    with pytest.raises(InvalidProbability):
        synth_sbm(10, 2, 0.1, 0.2, 2)
    with pytest.raises(ShapeMismatch):
        synth_sbm(10, 3, 0.2, 0.1, 2)


# perturbations


def sbm_split(seed=0):
    g = synth_sbm(120, 3, 0.1, 0.02, 6, seed=seed)
    return g, split_dataset(g, 0.8, seed=seed)


def test_label_noise_full_flip():
    g, s = sbm_split()
    g2, _ = perturb(g, s, "label_noise", 1.0, seed=1)
    assert np.all(g2.labels[s.train_ids] != g.labels[s.train_ids])
    assert np.array_equal(g2.labels[s.test_ids], g.labels[s.test_ids])


def test_feature_noise_zero_is_exact_identity():
    g, s = sbm_split()
    g2, _ = perturb(g, s, "feature_noise", 0.0, seed=1)
    assert g2.features.tobytes() == g.features.tobytes()


def test_label_sparsity_keeps_exact_count():
    g = synth_sbm(125, 3, 0.1, 0.02, 4, seed=0)
    s = split_dataset(g, 0.8, seed=0)
    assert len(s.train_ids) == 100
    g2, mask = perturb(g, s, "label_sparsity", 0.5, seed=2)
    assert mask[s.train_ids].sum() == 50
    assert np.array_equal(g2.label_mask(), mask)


def test_feature_sparsity_drops_exact_entries():
    g, s = sbm_split()
    g2, _ = perturb(g, s, "feature_sparsity", 0.25, seed=3)
    changed = (g2.features == 0) & (g.features != 0)
    assert changed.sum() == int(np.floor(0.25 * g.features.size + 0.5))


@pytest.mark.parametrize("kind,level", [("label_noise", 0.0), ("feature_noise", 0.0),
                                        ("label_sparsity", 1.0), ("feature_sparsity", 0.0)])
def test_zero_perturbation_is_identity(kind, level):
    g, s = sbm_split()
    g2, _ = perturb(g, s, kind, level, seed=4)
    assert g2.features.tobytes() == g.features.tobytes()
    assert np.array_equal(g2.labels, g.labels)
    assert np.array_equal(g2.label_mask(), g.label_mask())


def test_perturb_ratio_errors():
    g, s = sbm_split()
    with pytest.raises(InvalidRatio):
        perturb(g, s, "label_noise", 1.2)
    with pytest.raises(InvalidRatio):
        perturb(g, s, "feature_noise", -0.1)


def test_perturb_deterministic():
    g, s = sbm_split()
    a, _ = perturb(g, s, "feature_noise", 0.3, seed=8)
    b, _ = perturb(g, s, "feature_noise", 0.3, seed=8)
    assert a.features.tobytes() == b.features.tobytes()


# sampling


def test_non_edges_are_non_edges_and_distinct():
    g = synth_sbm(40, 2, 0.3, 0.05, 2, seed=1)
    neg = sample_non_edges(g, 100, stream(0, "t"))
    pairs = set(map(tuple, neg.tolist()))
    assert len(pairs) == 100
    assert not pairs & g.edge_set()
    assert np.all(neg[:, 0] < neg[:, 1])


def test_non_edges_prefix_stable_when_edges_removed():
    g = synth_sbm(40, 2, 0.3, 0.05, 2, seed=1)
    full = sample_non_edges(g, 50, stream(0, "t"))
    fewer = sample_non_edges(g, 40, stream(0, "t"))
    assert np.array_equal(full[:40], fewer)


def test_derive_seed_stable_and_tag_sensitive():
    assert derive_seed(1, "split") == derive_seed(1, "split")
    assert derive_seed(1, "split") != derive_seed(1, "train")
    assert 0 <= derive_seed(123, "x") < 2**63

import math
import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from graph_unlearn import kernels

IMPLS = sorted(kernels.backends())


def random_csr(n, k, density, seed):
    mat = sp.random(n, k, density=density, format="csr", random_state=seed)
    mat.sort_indices()
    return mat


@pytest.mark.parametrize("impl", IMPLS)
@given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 5), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_spmm_matches_scipy(impl, n, k, d, seed):
    mat = random_csr(n, k, 0.3, seed)
    x = np.random.default_rng(seed).standard_normal((k, d))
    out = kernels.spmm(mat, x, impl=kernels.backends()[impl])
    assert np.allclose(out, mat @ x, rtol=0, atol=1e-12)


def test_spmm_vector_and_empty_rows():
    mat = sp.csr_matrix(np.array([[0.0, 2.0], [0.0, 0.0]]))
    for impl in kernels.backends().values():
        assert kernels.spmm(mat, np.array([1.0, 3.0]), impl=impl).tolist() == [6.0, 0.0]


@given(st.integers(1, 25), st.integers(1, 6), st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_capacity_assign_backends_agree(n, k, seed):
    k = min(k, n)
    dist = np.random.default_rng(seed).random((n, k))
    cap = math.ceil(n / k)
    results = [kernels.capacity_assign(dist, cap, impl=m) for m in kernels.backends().values()]
    for r in results:
        assert np.bincount(r, minlength=k).max() <= cap
        assert np.array_equal(r, results[0])


def test_capacity_assign_rejects_small_cap():
    with pytest.raises(ValueError):
        kernels.capacity_assign(np.zeros((5, 2)), 2)


@given(st.lists(st.integers(0, 5), min_size=1, max_size=40), st.lists(st.integers(0, 5), min_size=1, max_size=40))
@settings(max_examples=100, deadline=None)
def test_pairwise_auc_backends_agree(pos, neg):
    vals = [kernels.pairwise_auc(pos, neg, impl=m) for m in kernels.backends().values()]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    for v in vals:
        assert abs(v - wins / (len(pos) * len(neg))) <= 1e-12


def test_pure_python_switch():
    env = {**os.environ, "GRAPH_UNLEARN_PURE_PYTHON": "1"}
    proc = subprocess.run([sys.executable, "-c", "from graph_unlearn import kernels; print(kernels.BACKEND)"],
                          capture_output=True, text=True, env=env, check=True)
    assert proc.stdout.strip() == "python"

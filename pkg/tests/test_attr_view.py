import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hgcl import autodiff as ad
from hgcl.attr_view import (
    attr_forward,
    build_hetero_edges,
    build_homogeneous_graph,
    cosine_similarity,
    hetero_attention_aggregate,
    init_attr_params,
    prepare_attr_inputs,
    sage_encode,
    semantic_fuse,
)
from hgcl.autodiff import Tensor

from helpers import FD_TOL, gradcheck, random_hetero_graph


def np_elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def np_leaky(x):
    return np.where(x > 0, x, 0.2 * x)


def edges_of(adj):
    a = sp.triu(adj, k=1).tocoo()
    return sorted(zip(a.row.tolist(), a.col.tolist()))


# ---------------------------------------------------------------- similarity graphs


def test_cosine_examples():
    assert cosine_similarity([1, 0], [1, 0]) == 1.0
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 0], [1, 1]) == pytest.approx(0.70710678, abs=1e-8)
    assert cosine_similarity([0, 0], [1, 1]) == 0.0
    with pytest.raises(ValueError, match="dimension"):
        cosine_similarity([1, 0], [1, 0, 0])


def test_homogeneous_graph_examples():
    x = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert edges_of(build_homogeneous_graph(x, 0.5)) == [(0, 1)]
    assert build_homogeneous_graph(x, 1.0 + 1e-9).nnz == 0
    same = np.tile([[0.3, -0.7, 2.0]], (5, 1))
    adj = build_homogeneous_graph(same, 0.9).toarray()
    assert (adj == ~np.eye(5, dtype=bool)).all()


def test_homogeneous_graph_symmetric_zero_diagonal():
    x = np.random.default_rng(0).normal(size=(30, 4))
    adj = build_homogeneous_graph(x, 0.3).toarray()
    assert (adj == adj.T).all() and not adj.diagonal().any()
    # zero rows are similar to nothing
    x[3] = 0.0
    assert not build_homogeneous_graph(x, 0.0).toarray()[3].any()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), lo=st.floats(0, 1), hi=st.floats(0, 1))
def test_thresholds_are_monotone(seed, lo, hi):
    lo, hi = min(lo, hi), max(lo, hi)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(12, 3))
    a_lo = build_homogeneous_graph(x, lo).toarray()
    a_hi = build_homogeneous_graph(x, hi).toarray()
    assert not (a_hi & ~a_lo).any()
    h_t, h_f = rng.normal(size=(6, 4)), rng.normal(size=(5, 4))
    w_t, w_f = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    e_lo = set(zip(*(a.tolist() for a in build_hetero_edges(h_t, h_f, w_t, w_f, lo))))
    e_hi = set(zip(*(a.tolist() for a in build_hetero_edges(h_t, h_f, w_t, w_f, hi))))
    assert e_hi <= e_lo


# ---------------------------------------------------------------- GraphSAGE layer


def test_sage_isolated_fallback():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 2))
    w, b = Tensor(rng.normal(size=(4, 5))), Tensor(rng.normal(size=5))
    out = sage_encode(sp.csr_matrix((3, 3), dtype=bool), x, w, b).data
    np.testing.assert_allclose(out, np_elu(np.hstack([x, x]) @ w.data + b.data))


def test_sage_mutual_identical_rows():
    x = np.array([[0.2, -1.0], [0.2, -1.0]])
    adj = sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=bool))
    rng = np.random.default_rng(2)
    out = sage_encode(adj, x, Tensor(rng.normal(size=(4, 3))), Tensor(rng.normal(size=3))).data
    np.testing.assert_array_equal(out[0], out[1])


def test_sage_line_graph_by_hand():
    # 0 - 1 - 2 - 3 with one-hot attributes
    x = np.eye(4)
    adj = sp.csr_matrix(np.array([[0, 1, 0, 0], [1, 0, 1, 0], [0, 1, 0, 1], [0, 0, 1, 0]], dtype=bool))
    means = np.array([
        [0, 1, 0, 0],
        [0.5, 0, 0.5, 0],
        [0, 0.5, 0, 0.5],
        [0, 0, 1, 0],
    ])
    w = np.arange(24, dtype=float).reshape(8, 3) / 10 - 1.0
    b = np.array([0.1, -0.2, 0.0])
    expected = np_elu(np.hstack([x, means]) @ w + b)
    np.testing.assert_allclose(sage_encode(adj, x, Tensor(w), Tensor(b)).data, expected, rtol=1e-12)


def test_sage_shape_errors():
    with pytest.raises(ValueError):
        sage_encode(sp.csr_matrix((2, 2)), np.ones((3, 2)), Tensor(np.ones((4, 1))))
    with pytest.raises(ValueError):
        sage_encode(sp.csr_matrix((3, 3)), np.ones((3, 2)), Tensor(np.ones((5, 1))))


# ---------------------------------------------------------------- heterogeneous edges


def test_hetero_edges_examples():
    h = np.tile([[1.0, 2.0, -0.5]], (3, 1))
    c, o = build_hetero_edges(h, h[:2], np.eye(3), np.eye(3), 0.9)
    assert list(zip(c.tolist(), o.tolist())) == [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)]
    c, o = build_hetero_edges(h, h[:2], np.eye(3), np.eye(3), 1.0 + 1e-9)
    assert c.size == 0 and o.size == 0


def test_hetero_edges_three_by_two_by_hand():
    h_t = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    h_f = np.array([[2.0, 0.0], [1.0, -1.0]])
    w_t = np.array([[1.0, 0.0], [0.0, 2.0]])  # stretches the second axis
    w_f = np.eye(2)
    # projected targets: (1,0), (0,2), (1,2); others: (2,0), (1,-1)
    table = np.array([
        [1.0, 1 / math.sqrt(2)],
        [0.0, -1 / math.sqrt(2)],
        [1 / math.sqrt(5), -1 / math.sqrt(10)],
    ])
    c, o = build_hetero_edges(h_t, h_f, w_t, w_f, 0.4)
    expected = [(i, j) for i in range(3) for j in range(2) if table[i, j] >= 0.4]
    assert list(zip(c.tolist(), o.tolist())) == expected == [(0, 0), (0, 1), (2, 0)]


# ---------------------------------------------------------------- attention aggregation


def test_single_neighbor_takes_everything():
    h_t = Tensor([[1.0, -1.0], [0.5, 0.5]])
    h_o = Tensor([[0.3, -2.0], [4.0, 1.0]])
    w = Tensor(np.array([[0.7, 0.1], [-0.3, 0.2]]))
    z, has = hetero_attention_aggregate(h_t, h_o, w, np.array([0, 1]), np.array([1, 0]))
    np.testing.assert_allclose(z.data, np_elu(h_o.data[[1, 0]]))
    assert has.all()


def test_identical_neighbors_split_evenly():
    h_t = Tensor([[1.0, 2.0]])
    h_o = Tensor([[0.5, -1.0], [0.5, -1.0]])
    w = Tensor(np.eye(2))
    z, _ = hetero_attention_aggregate(h_t, h_o, w, np.array([0, 0]), np.array([0, 1]))
    np.testing.assert_allclose(z.data, np_elu(np.array([[0.5, -1.0]])))


def test_two_distinct_neighbors_by_hand():
    h_t = np.array([[1.0, 0.5]])
    h_o = np.array([[2.0, 0.0], [0.0, -1.0]])
    w = np.array([[1.0, 0.0], [0.0, 2.0]])
    # e_0 = leaky(1*2 + 0) = 2 ; e_1 = leaky(0 + 0.5*2*(-1)) = leaky(-1) = -0.2
    a0 = math.exp(2.0) / (math.exp(2.0) + math.exp(-0.2))
    a1 = 1 - a0
    expected = np_elu(a0 * h_o[0] + a1 * h_o[1])
    z, _ = hetero_attention_aggregate(Tensor(h_t), Tensor(h_o), Tensor(w), np.array([0, 0]), np.array([0, 1]))
    np.testing.assert_allclose(z.data[0], expected, rtol=1e-12)


def test_nodes_without_neighbors_are_zero_and_flagged():
    rng = np.random.default_rng(0)
    h_t, h_o = Tensor(rng.normal(size=(4, 3))), Tensor(rng.normal(size=(3, 3)))
    w = Tensor(rng.normal(size=(3, 3)))
    for act in ("elu", "sigmoid"):
        z, has = hetero_attention_aggregate(h_t, h_o, w, np.array([1, 1, 3]), np.array([0, 2, 1]), agg_act=act)
        assert has.tolist() == [False, True, False, True]
        assert not z.data[[0, 2]].any()
    z, has = hetero_attention_aggregate(h_t, h_o, w, np.array([], int), np.array([], int))
    assert not has.any() and z.shape == (4, 3) and not z.data.any()


def test_unsorted_centers_rejected():
    t = Tensor(np.ones((2, 2)))
    with pytest.raises(ValueError, match="grouped"):
        hetero_attention_aggregate(t, t, Tensor(np.eye(2)), np.array([1, 0]), np.array([0, 0]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_neighbor_order_does_not_matter(seed):
    rng = np.random.default_rng(seed)
    n_t, n_o, d = 5, 6, 3
    h_t, h_o, w = (Tensor(rng.normal(size=s)) for s in ((n_t, d), (n_o, d), (d, d)))
    mask = rng.random((n_t, n_o)) < 0.5
    centers, others = np.nonzero(mask)
    perm_others = others.copy()
    for i in range(n_t):
        sel = centers == i
        perm_others[sel] = rng.permutation(others[sel])
    z1, _ = hetero_attention_aggregate(h_t, h_o, w, centers, others)
    z2, _ = hetero_attention_aggregate(h_t, h_o, w, centers, perm_others)
    np.testing.assert_allclose(z1.data, z2.data, rtol=1e-12, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_attention_weights_sum_to_one(seed):
    # with the identity as aggregation, a constant-ones feature column recovers sum(alpha) per node
    rng = np.random.default_rng(seed)
    h_o = np.hstack([rng.normal(size=(6, 2)), np.ones((6, 1))])
    h_t = rng.normal(size=(4, 3))
    centers, others = np.nonzero(rng.random((4, 6)) < 0.6)
    z, has = hetero_attention_aggregate(Tensor(h_t), Tensor(h_o), Tensor(rng.normal(size=(3, 3))),
                                        centers, others, agg_act="leaky_relu")
    np.testing.assert_allclose(z.data[has, 2], 1.0, atol=1e-9)


# ---------------------------------------------------------------- semantic fusion


def test_semantic_single_group():
    rng = np.random.default_rng(0)
    z = Tensor(rng.normal(size=(4, 3)))
    fused, beta = semantic_fuse([z], [Tensor(rng.normal(size=3))], Tensor(rng.normal(size=(3, 3))),
                                Tensor(rng.normal(size=3)))
    np.testing.assert_allclose(beta.data, [1.0])
    np.testing.assert_allclose(fused.data, z.data)


def test_semantic_equal_scores():
    rng = np.random.default_rng(1)
    z1, z2 = Tensor(rng.normal(size=(4, 3))), Tensor(rng.normal(size=(4, 3)))
    q = Tensor(np.zeros(3))
    fused, beta = semantic_fuse([z1, z2], [q, q], Tensor(rng.normal(size=(3, 3))), Tensor(np.zeros(3)))
    np.testing.assert_allclose(beta.data, [0.5, 0.5])
    np.testing.assert_allclose(fused.data, 0.5 * (z1.data + z2.data))


def test_semantic_two_groups_by_hand():
    z1 = np.array([[1.0, 0.0], [0.0, 1.0]])
    z2 = np.array([[2.0, 2.0], [-1.0, 0.0]])
    w = np.array([[1.0, 0.0], [0.0, 1.0]])
    b = np.array([0.0, 0.5])
    q1, q2 = np.array([1.0, 0.0]), np.array([0.0, 2.0])
    s1 = np.mean([q1 @ np.tanh(row @ w + b) for row in z1])
    s2 = np.mean([q2 @ np.tanh(row @ w + b) for row in z2])
    beta = np.exp([s1, s2]) / np.exp([s1, s2]).sum()
    fused, got = semantic_fuse([Tensor(z1), Tensor(z2)], [Tensor(q1), Tensor(q2)], Tensor(w), Tensor(b))
    np.testing.assert_allclose(got.data, beta, rtol=1e-12)
    np.testing.assert_allclose(fused.data, beta[0] * z1 + beta[1] * z2, rtol=1e-12)
    assert got.data.sum() == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------- full view


def small_attr_setup(seed, hidden=4, out=3):
    g = random_hetero_graph(seed, max_nodes=6)
    inputs = prepare_attr_inputs(g, {t: 0.3 for t in g.node_types})
    params = init_attr_params(inputs, hidden, out, np.random.default_rng(seed))
    eps_r = {t: 0.0 for t in g.node_types}
    return g, inputs, params, eps_r


@pytest.mark.parametrize("seed", range(3))
def test_full_attr_view_gradient(seed):
    g, inputs, params, eps_r = small_attr_setup(seed)
    pinned = attr_forward(params, inputs, eps_r).hetero_edges
    weights = np.random.default_rng(100 + seed).normal(size=(g.num_targets, 3))

    def build():
        z = attr_forward(params, inputs, eps_r, hetero_edges=pinned).z
        return ad.sum(ad.mul(z, Tensor(weights)))

    assert gradcheck(build, list(params.values())) < FD_TOL


def test_full_attr_view_outputs():
    g, inputs, params, eps_r = small_attr_setup(7)
    out = attr_forward(params, inputs, eps_r)
    assert out.z.shape == (g.num_targets, 3)
    assert out.beta.data.sum() == pytest.approx(1.0, abs=1e-9)
    assert set(out.hetero_edges) == set(g.node_types) - {g.target_type}
    # threshold above 1 leaves every target without heterogeneous neighbors
    empty = attr_forward(params, inputs, {t: 1.5 for t in g.node_types})
    assert all(flags.all() for flags in empty.no_neighbors.values())

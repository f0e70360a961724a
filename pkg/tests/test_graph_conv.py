"""
Unit tests for the two-step graph convolution and the multi-head update.
"""

import numpy as np
import pytest

from models.params import AttentionParams, EdgeWeightParams, GCParams
from numerics import ops
from numerics.gradcheck import grad_check
from numerics.tensor import Tensor, constant, parameter
from processors.graph_conv import gc_layer, gc_step1, gc_step2, multihead_update
from processors.patch_graph import compute_edge_weights, knn_graph
from utils.errors import DimensionError, GraphStateError


def relu(x):
    return np.maximum(x, 0.0)


def make_gc(gen, dim, heads):
    chunk = dim // heads
    return GCParams(
        w_r1=parameter(gen.normal(size=(dim, dim))),
        w_01=parameter(gen.normal(size=(dim, dim))),
        w_r2=parameter(gen.normal(size=(dim, dim))),
        w_02=parameter(gen.normal(size=(dim, dim))),
        update_heads=[parameter(gen.normal(size=(chunk, chunk))) for _ in range(heads)],
    )


def make_attn(gen, dim, heads):
    width = dim // heads
    return AttentionParams(
        w_q=[parameter(gen.normal(size=(dim, width)) * 0.3) for _ in range(heads)],
        w_k=[parameter(gen.normal(size=(dim, width)) * 0.3) for _ in range(heads)],
        w_v=[parameter(gen.normal(size=(dim, width))) for _ in range(heads)],
    )


def weighted_graph(gen, features, k):
    dim = features.shape[1]
    edge = EdgeWeightParams(a=parameter(gen.normal(size=2 * dim)), b=parameter([0.1]))
    return compute_edge_weights(Tensor(features), knn_graph(Tensor(features), k), edge)


def loop_step1(g, graph, params):
    """h_i = ReLU(Σ_j (α_ij / c_i) W_r1 g_j + α_ii W_01 g_i), one node at a time."""
    out = np.zeros_like(g)
    for i in range(g.shape[0]):
        total = np.zeros(g.shape[1])
        for rank, j in enumerate(graph.neighbors[i]):
            total += graph.alpha.data[i, rank] / graph.k * (params.w_r1.data @ g[j])
        total += graph.alpha_self.data[i, 0] * (params.w_01.data @ g[i])
        out[i] = relu(total)
    return out


def loop_step2(h, graph, params, normalize):
    out = np.zeros_like(h)
    for i in range(h.shape[0]):
        total = np.zeros(h.shape[1])
        for rank, j in enumerate(graph.neighbors[i]):
            coeff = graph.alpha.data[i, rank] / graph.k if normalize else 1.0
            total += coeff * (params.w_r2.data @ h[j])
        total += params.w_02.data @ h[i]
        out[i] = relu(total)
    return out


def loop_update(h, params):
    chunk = h.shape[1] // params.head_count
    return np.concatenate(
        [h[:, s * chunk:(s + 1) * chunk] @ w.data for s, w in enumerate(params.update_heads)],
        axis=1,
    )


@pytest.fixture
def instance():
    """Random 9-node, 4-wide instance with a weighted 3-NN graph."""
    gen = np.random.default_rng(7)
    features = gen.normal(size=(9, 4))
    return features, weighted_graph(gen, features, 3), make_gc(gen, 4, 2), make_attn(gen, 4, 2)


def test_step1_matches_loop_oracle():
    """gc_step1 equals the per-node loop on 50 random instances."""
    for seed in range(50):
        gen = np.random.default_rng(seed)
        features = gen.normal(size=(int(gen.integers(2, 10)), 4))
        graph = weighted_graph(gen, features, int(gen.integers(1, features.shape[0])))
        params = make_gc(gen, 4, 2)
        out = gc_step1(Tensor(features), graph, params)
        np.testing.assert_allclose(out.data, loop_step1(features, graph, params), atol=1e-10)


@pytest.mark.parametrize("normalize", [False, True])
def test_step2_matches_loop_oracle(normalize):
    """gc_step2 equals the per-node loop, weighted or not."""
    for seed in range(50):
        gen = np.random.default_rng(100 + seed)
        features = gen.normal(size=(8, 4))
        graph = weighted_graph(gen, features, 3)
        params = make_gc(gen, 4, 2)
        h1 = relu(gen.normal(size=(8, 4)))
        out = gc_step2(Tensor(h1), graph, params, normalize=normalize)
        np.testing.assert_allclose(out.data, loop_step2(h1, graph, params, normalize), atol=1e-10)


def test_multihead_update_matches_chunk_oracle():
    """Contiguous chunks are transformed by their own matrix and re-joined."""
    for seed in range(50):
        gen = np.random.default_rng(200 + seed)
        heads = int(gen.choice([1, 2, 3, 6]))
        params = make_gc(gen, 6, heads)
        h = gen.normal(size=(5, 6))
        np.testing.assert_allclose(multihead_update(Tensor(h), params).data, loop_update(h, params), atol=1e-10)


def test_single_head_update_is_full_matrix(rng):
    """t = 1 reduces to one D x D transform."""
    params = make_gc(rng, 4, 1)
    h = rng.normal(size=(3, 4))
    np.testing.assert_allclose(multihead_update(Tensor(h), params).data, h @ params.update_heads[0].data)


def test_isolated_nodes_keep_only_self_term(rng):
    """A one-node graph has no neighbor sum."""
    features = rng.normal(size=(1, 4))
    graph = weighted_graph(rng, features, 1)
    params = make_gc(rng, 4, 2)
    expected = relu(graph.alpha_self.data[0, 0] * (params.w_01.data @ features[0]))
    np.testing.assert_allclose(gc_step1(Tensor(features), graph, params).data[0], expected)


def test_unweighted_graph_rejected(instance):
    """Convolution needs edge weights."""
    features, _, params, _ = instance
    bare = knn_graph(Tensor(features), 2)
    with pytest.raises(GraphStateError):
        gc_step1(Tensor(features), bare, params)


def test_width_mismatch_rejected(instance):
    """Node width must equal the GC width."""
    features, graph, _, _ = instance
    with pytest.raises(DimensionError):
        gc_step1(Tensor(features), graph, make_gc(np.random.default_rng(0), 6, 2))


def test_params_reject_indivisible_heads(rng):
    """D must split evenly into update heads."""
    with pytest.raises(ValueError):
        GCParams(
            w_r1=parameter(np.zeros((4, 4))),
            w_01=parameter(np.zeros((4, 4))),
            w_r2=parameter(np.zeros((4, 4))),
            w_02=parameter(np.zeros((4, 4))),
            update_heads=[parameter(np.zeros((1, 1)))] * 3,
        )


def test_gc_layer_without_attention_is_composition(instance):
    """use_attention=False returns the multi-head update of step two of step one."""
    features, graph, params, attn = instance
    expected = loop_update(loop_step2(loop_step1(features, graph, params), graph, params, False), params)
    out = gc_layer(Tensor(features), graph, params, attn, use_attention=False)
    np.testing.assert_allclose(out.data, expected, atol=1e-10)


def test_gc_layer_permutation_equivariance():
    """Permuting nodes permutes the output on distinct-similarity instances."""
    for seed in range(20):
        gen = np.random.default_rng(300 + seed)
        features = gen.normal(size=(10, 4))
        edge = EdgeWeightParams(a=parameter(gen.normal(size=8)), b=parameter([0.2]))
        params, attn = make_gc(gen, 4, 2), make_attn(gen, 4, 2)
        perm = gen.permutation(10)

        def run(x):
            graph = compute_edge_weights(Tensor(x), knn_graph(Tensor(x), 3), edge)
            return gc_layer(Tensor(x), graph, params, attn).data

        np.testing.assert_allclose(run(features[perm]), run(features)[perm], atol=1e-10)


def test_step1_locality():
    """Perturbing node j changes step-one rows only where j is the node or a neighbor."""
    for seed in range(20):
        gen = np.random.default_rng(500 + seed)
        features = gen.normal(size=(8, 4))
        graph = weighted_graph(gen, features, 3)
        params = make_gc(gen, 4, 2)
        base = gc_step1(Tensor(features), graph, params).data

        j = int(gen.integers(0, 8))
        perturbed = features.copy()
        perturbed[j] += gen.normal(size=4)
        out = gc_step1(Tensor(perturbed), graph, params).data

        reached = {j} | {i for i in range(8) if j in graph.neighbors[i]}
        for i in range(8):
            if i not in reached:
                np.testing.assert_array_equal(out[i], base[i])


@pytest.mark.parametrize("use_attention", [False, True])
def test_gc_layer_gradients_match_finite_differences(use_attention):
    """A 6-node, 4-wide, 2-head layer passes the central-difference check end to end."""
    gen = np.random.default_rng(61)
    nodes = parameter(gen.normal(size=(6, 4)))
    topology = knn_graph(nodes, 2)
    edge = EdgeWeightParams(a=parameter(gen.normal(size=8) * 0.5), b=parameter([0.1]))
    params = make_gc(gen, 4, 2)
    attn = make_attn(gen, 4, 2)
    named = {
        "nodes": nodes,
        **dict(edge.named_tensors("edge.")),
        **dict(params.named_tensors("gc.")),
        **dict(attn.named_tensors("attn.")),
    }
    mix = constant(gen.normal(size=(6, 4)))

    def objective(_):
        graph = compute_edge_weights(nodes, topology, edge)
        return ops.sum_all(ops.mul(gc_layer(nodes, graph, params, attn, use_attention=use_attention), mix))

    report = grad_check(objective, named)
    assert report.passed(1e-4), report

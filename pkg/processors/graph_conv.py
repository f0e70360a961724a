"""
Two-step relational graph convolution with the multi-head feature update.

Node features are rows; a transform W applied to a node vector g (W·g) is
computed as g·Wᵀ on the row matrix. Neighbor contributions are summed in
stored rank order, then the self term is added, so results are
bit-reproducible.
"""

from typing import Optional

from models.graph import PatchGraph
from models.params import AttentionParams, GCParams
from numerics import ops
from numerics.tensor import Tensor, constant
from processors.attention import multi_head_attention
from utils.errors import DimensionError, GraphStateError


def _check(nodes: Tensor, graph: PatchGraph, params: GCParams) -> None:
    if not graph.weighted:
        raise GraphStateError("edge weights must be computed before graph convolution")
    if nodes.shape[0] != graph.node_count:
        raise DimensionError(f"{nodes.shape[0]} node rows for a {graph.node_count}-node graph")
    if nodes.shape[1] != params.feature_dim:
        raise DimensionError(f"node width {nodes.shape[1]} does not match GC width {params.feature_dim}")


def _neighbor_sum(features: Tensor, graph: PatchGraph, weighted: bool) -> Optional[Tensor]:
    """Σ_j over N_i of (α_ij / c_i)·x_j when weighted, plain Σ_j x_j otherwise."""
    total = None
    inv_degree = constant(1.0 / graph.degree) if graph.k else None
    for rank in range(graph.k):
        term = ops.gather_rows(features, graph.neighbors[:, rank])
        if weighted:
            coeff = ops.mul(ops.take_slice(graph.alpha, rank, rank + 1, axis=1), inv_degree)
            term = ops.mul(term, coeff)
        total = ops.maybe_add(total, term)
    return total


def gc_step1(nodes: Tensor, graph: PatchGraph, params: GCParams) -> Tensor:
    """h_i⁽¹⁾ = ReLU(Σ_j (α_ij/c_i) W_r1 g_j + α_ii W_01 g_i)."""
    _check(nodes, graph, params)
    self_term = ops.matmul(ops.mul(nodes, graph.alpha_self), ops.transpose(params.w_01))
    neighbor_sum = _neighbor_sum(nodes, graph, weighted=True)
    if neighbor_sum is None:
        return ops.relu(self_term)
    return ops.relu(ops.add(ops.matmul(neighbor_sum, ops.transpose(params.w_r1)), self_term))


def gc_step2(h1: Tensor, graph: PatchGraph, params: GCParams, normalize: bool = False) -> Tensor:
    """
    h_i⁽²⁾ = ReLU(Σ_j W_r2 h_j⁽¹⁾ + W_02 h_i⁽¹⁾).

    The neighbor sum is unweighted unless ``normalize`` applies the step-one
    α_ij / c_i coefficients.
    """
    _check(h1, graph, params)
    self_term = ops.matmul(h1, ops.transpose(params.w_02))
    neighbor_sum = _neighbor_sum(h1, graph, weighted=normalize)
    if neighbor_sum is None:
        return ops.relu(self_term)
    return ops.relu(ops.add(ops.matmul(neighbor_sum, ops.transpose(params.w_r2)), self_term))


def multihead_update(h2: Tensor, params: GCParams) -> Tensor:
    """Split rows into t contiguous chunks, transform each by its own matrix, concatenate."""
    width = h2.shape[1] // params.head_count
    if width * params.head_count != h2.shape[1]:
        raise DimensionError(f"width {h2.shape[1]} not divisible by {params.head_count} heads")
    chunks = ops.split(h2, [width] * params.head_count, axis=1)
    return ops.concat(
        [ops.matmul(chunk, w) for chunk, w in zip(chunks, params.update_heads)],
        axis=1,
    )


def gc_layer(
    nodes: Tensor,
    graph: PatchGraph,
    params: GCParams,
    attn: AttentionParams,
    use_attention: bool = True,
    scaled_attention: bool = False,
    normalize_step2: bool = False,
) -> Tensor:
    """Step one, step two and the multi-head update, optionally followed by self-attention."""
    h = multihead_update(
        gc_step2(gc_step1(nodes, graph, params), graph, params, normalize=normalize_step2),
        params,
    )
    if not use_attention:
        return h
    return multi_head_attention(h, h, h, attn, scaled=scaled_attention)

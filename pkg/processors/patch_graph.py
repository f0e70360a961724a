"""
Image-to-graph conversion: patch nodes, exhaustive KNN neighbor search and
feature-conditioned edge weights.
"""

from typing import List, Tuple

import numpy as np

from config.logging_config import get_logger
from config.settings import PIXEL_SCALE
from models.graph import PatchGraph
from models.params import EdgeWeightParams
from numerics import ops
from numerics.tensor import Tensor
from utils.errors import ConfigError, DimensionError, GraphStateError

logger = get_logger(__name__)

METRICS = ("cosine", "euclidean")


def patchify(image: Tensor, grid_side: int, normalize: bool = True) -> Tensor:
    """
    Split an H x W x C image into grid_side² patch nodes.

    Args:
        image: H x W x C pixel tensor
        grid_side: G_p, patches per side
        normalize: divide pixel values by 255

    Returns:
        N x (H/G_p · W/G_p · C) tensor; row i is grid cell (i // G_p, i % G_p)
    """
    if image.data.ndim != 3:
        raise DimensionError(f"patchify expects H x W x C, got {image.shape}")
    height, width, channels = image.shape
    if grid_side < 1 or height % grid_side or width % grid_side:
        raise ConfigError(f"image {height}x{width} is not divisible by grid side {grid_side}")
    ph, pw = height // grid_side, width // grid_side
    blocks = (
        image.data.reshape(grid_side, ph, grid_side, pw, channels)
        .transpose(0, 2, 1, 3, 4)
        .reshape(grid_side * grid_side, ph * pw * channels)
    )
    if normalize:
        blocks = blocks / PIXEL_SCALE
    return Tensor(blocks)


def unpatchify(nodes: Tensor, grid_side: int, image_shape: Tuple[int, int, int]) -> Tensor:
    """Inverse of ``patchify(..., normalize=False)``."""
    height, width, channels = image_shape
    ph, pw = height // grid_side, width // grid_side
    if nodes.shape != (grid_side * grid_side, ph * pw * channels):
        raise DimensionError(f"node tensor {nodes.shape} does not match image {image_shape}")
    image = (
        nodes.data.reshape(grid_side, grid_side, ph, pw, channels)
        .transpose(0, 2, 1, 3, 4)
        .reshape(height, width, channels)
    )
    return Tensor(image)


def similarity_matrix(features: np.ndarray, metric: str) -> np.ndarray:
    """
    Pairwise scores where larger means closer.

    Cosine rows with zero norm score 0 against everything; euclidean scores
    are negated squared distances.
    """
    if metric == "cosine":
        norms = np.sqrt((features * features).sum(axis=1))
        safe = np.where(norms > 0, norms, 1.0)
        unit = features / safe[:, None]
        scores = unit @ unit.T
        zero = norms == 0
        scores[zero, :] = 0.0
        scores[:, zero] = 0.0
        return scores
    if metric == "euclidean":
        diff = features[:, None, :] - features[None, :, :]
        return -(diff * diff).sum(axis=2)
    raise ConfigError(f"unknown metric {metric!r}; expected one of {METRICS}")


def knn_graph(nodes: Tensor, k: int, metric: str = "cosine") -> PatchGraph:
    """
    Exhaustive K-nearest-neighbor graph over node rows.

    Ties are broken by lower node index. K_nn >= N is clamped to N - 1 and
    noted in the graph's warnings, as are ties at the neighbor cutoff.
    """
    if k < 1:
        raise ConfigError(f"knn must be >= 1, got {k}")
    features = nodes.data
    if features.ndim != 2:
        raise DimensionError(f"knn_graph expects N x D node features, got {nodes.shape}")
    count = features.shape[0]
    warnings: List[str] = []

    effective_k = min(k, count - 1)
    if effective_k < k:
        message = f"knn {k} clamped to {effective_k} for {count} nodes"
        warnings.append(message)
        logger.warning(message)

    scores = similarity_matrix(features, metric)
    neighbors = np.zeros((count, effective_k), dtype=np.int64)
    tied_nodes = 0
    for i in range(count):
        candidates = np.array([j for j in range(count) if j != i], dtype=np.int64)
        if candidates.size == 0:
            continue
        row = scores[i, candidates]
        # lexsort: last key is primary -> descending score, then ascending index
        order = np.lexsort((candidates, -row))
        neighbors[i] = candidates[order[:effective_k]]
        ranked = row[order[: effective_k + 1]]
        if ranked.size > 1 and np.any(ranked[1:] == ranked[:-1]):
            tied_nodes += 1

    if tied_nodes:
        message = f"similarity ties broken by node index at {tied_nodes}/{count} nodes"
        warnings.append(message)
        logger.warning(message)

    logger.debug(f"Built {metric} KNN graph: {count} nodes, k={effective_k}")
    return PatchGraph(neighbors=neighbors, metric=metric, requested_k=k, warnings=warnings)


def compute_edge_weights(nodes: Tensor, graph: PatchGraph, params: EdgeWeightParams) -> PatchGraph:
    """
    Score every edge and self-loop with sigmoid(a · [x_i || x_j] + b).

    Differentiable with respect to ``a``, ``b`` and the node features.
    """
    count, dim = nodes.shape
    if params.a.shape != (2 * dim,):
        raise DimensionError(f"edge vector a has shape {params.a.shape}; expected ({2 * dim},) for D={dim}")
    if graph.node_count != count:
        raise DimensionError(f"graph has {graph.node_count} nodes but features have {count} rows")

    a_src, a_dst = ops.split(ops.reshape(params.a, (2 * dim, 1)), [dim, dim], axis=0)
    bias = ops.reshape(params.b, (1, 1))
    source_score = ops.matmul(nodes, a_src)   # a_1 · x_i
    target_score = ops.matmul(nodes, a_dst)   # a_2 · x_j

    alpha_self = ops.sigmoid(ops.add(ops.add(source_score, target_score), bias))
    alpha = None
    if graph.k > 0:
        columns = [
            ops.add(ops.add(source_score, ops.gather_rows(target_score, graph.neighbors[:, rank])), bias)
            for rank in range(graph.k)
        ]
        alpha = ops.sigmoid(ops.concat(columns, axis=1))
    return graph.with_weights(alpha, alpha_self)


def format_graph(graph: PatchGraph) -> str:
    """One ``i<TAB>j<TAB>alpha`` line per edge, sorted by (i, rank); 6 decimals."""
    if not graph.weighted:
        raise GraphStateError("graph edge weights are not set")
    lines = []
    alpha = graph.alpha.data if graph.alpha is not None else None
    for i in range(graph.node_count):
        for rank in range(graph.k):
            lines.append(f"{i}\t{int(graph.neighbors[i, rank])}\t{alpha[i, rank]:.6f}")
    return "\n".join(lines) + ("\n" if lines else "")

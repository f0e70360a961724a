"""
Full network: stem with position embeddings, residual Grapher and FFN
blocks, pyramid downsampling and the regression head.
"""

from typing import List, Optional, Tuple

import numpy as np

from config.logging_config import get_logger
from models.configs import ModelConfig
from models.graph import PatchGraph
from models.params import BlockParams, HeadParams, ModelParams
from numerics import ops
from numerics.tensor import Tensor
from processors.graph_conv import gc_layer
from processors.patch_graph import compute_edge_weights, knn_graph, patchify
from utils.errors import ConfigError, DimensionError

logger = get_logger(__name__)


def stem(image: Tensor, params: ModelParams, config: ModelConfig) -> Tensor:
    """
    O_stem = pointwise(ReLU(patchify(image)·K_patch)) + PosEmb.

    Returns:
        N x D node features
    """
    nodes = patchify(image, config.grid_side)
    if nodes.shape[1] != params.stem.patch_kernel.shape[0]:
        raise DimensionError(
            f"patch width {nodes.shape[1]} does not match stem kernel {params.stem.patch_kernel.shape}"
        )
    hidden = ops.relu(ops.matmul(nodes, params.stem.patch_kernel))
    embedded = ops.matmul(hidden, params.stem.pointwise_kernel)
    return ops.add(embedded, params.pos_emb)


def build_graph(o: Tensor, block: BlockParams, config: ModelConfig, graph: Optional[PatchGraph] = None) -> PatchGraph:
    """KNN graph over the current features (or the given one) with this block's edge weights."""
    if graph is None:
        graph = knn_graph(o, config.knn, config.metric)
    return compute_edge_weights(o, graph, block.edge)


def grapher_block(
    o: Tensor,
    block: BlockParams,
    config: ModelConfig,
    graph: Optional[PatchGraph] = None,
) -> Tensor:
    """
    O_Grapher = ReLU(GCLayer(o·W_in))·W_out + o.

    Args:
        o: N x D block input
        block: this block's parameters
        config: model switches
        graph: reuse this neighbor structure instead of rebuilding it from ``o``
    """
    weighted = build_graph(o, block, config, graph)
    gc_out = gc_layer(
        ops.matmul(o, block.w_in),
        weighted,
        block.gc,
        block.attn,
        use_attention=config.use_attention,
        scaled_attention=config.scaled_attention,
        normalize_step2=config.normalize_step2,
    )
    branch = ops.matmul(ops.relu(gc_out), block.w_out)
    return ops.add(branch, o) if config.residual else branch


def ffn_block(o: Tensor, block: BlockParams, residual: bool = True) -> Tensor:
    """O_FFN = ReLU(o·W_1)·W_2 + o, hidden width 4D."""
    branch = ops.matmul(ops.relu(ops.matmul(o, block.ffn_w1)), block.ffn_w2)
    return ops.add(branch, o) if residual else branch


def downsample_indices(grid_side: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Top-left, top-right, bottom-left, bottom-right node of every 2x2 cell, row-major."""
    if grid_side % 2:
        raise ConfigError(f"cannot downsample odd grid side {grid_side}")
    half = grid_side // 2
    rows, cols = np.divmod(np.arange(half * half), half)
    top_left = (2 * rows) * grid_side + 2 * cols
    return top_left, top_left + 1, top_left + grid_side, top_left + grid_side + 1


def downsample(o: Tensor, weight: Tensor, grid_side: int) -> Tensor:
    """
    Merge each 2x2 node neighborhood: concatenate the four rows (4D) and
    project back to D with ``weight``.
    """
    if o.shape[0] != grid_side * grid_side:
        raise DimensionError(f"{o.shape[0]} nodes do not form a {grid_side}x{grid_side} grid")
    corners = [ops.gather_rows(o, index) for index in downsample_indices(grid_side)]
    return ops.matmul(ops.concat(corners, axis=1), weight)


def predict_age(o: Tensor, head: HeadParams) -> Tensor:
    """Pointwise conv, ReLU, pointwise conv to one channel, mean over nodes."""
    hidden = ops.relu(ops.add(ops.matmul(o, head.k_h1), head.b_h1))
    per_node = ops.add(ops.matmul(hidden, head.k_h2), head.b_h2)
    return ops.mean_all(per_node)


def backbone(
    image: Tensor,
    params: ModelParams,
    config: ModelConfig,
    collect: Optional[List[Tensor]] = None,
) -> Tensor:
    """
    Stem and all stages; returns the final node features.

    Args:
        collect: optional list receiving the features after every Grapher block
    """
    o = stem(image, params, config)
    grid_side = config.grid_side
    flags = config.downsample_flags()
    block_index = 0
    down_index = 0
    for stage in range(config.stage_count):
        stage_graph = knn_graph(o, config.knn, config.metric) if config.static_graph else None
        for _ in range(config.blocks_per_stage):
            block = params.blocks[block_index]
            o = grapher_block(o, block, config, graph=stage_graph)
            if collect is not None:
                collect.append(o)
            o = ffn_block(o, block, residual=config.residual)
            block_index += 1
        if stage < config.stage_count - 1 and flags[stage]:
            o = downsample(o, params.downsample[down_index], grid_side)
            grid_side //= 2
            down_index += 1
        logger.debug(f"Stage {stage} complete: {o.shape[0]} nodes")
    return o


def forward(image: Tensor, params: ModelParams, config: ModelConfig) -> Tensor:
    """Predicted age as a one-element tensor."""
    return predict_age(backbone(image, params, config), params.head)


def predict(image: Tensor, params: ModelParams, config: ModelConfig) -> float:
    return forward(image, params, config).item()


def feature_diversity(o: Tensor) -> float:
    """Mean over features of the standard deviation across nodes."""
    return float(np.mean(np.std(o.data, axis=0)))

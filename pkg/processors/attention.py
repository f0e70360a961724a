"""
Multi-head dot-product attention over node features.
"""

import math
from typing import List, Optional, Tuple

from models.params import AttentionParams
from numerics import ops
from numerics.tensor import Tensor
from utils.errors import DimensionError

HeadTriple = Tuple[Tensor, Tensor, Tensor]


def project_heads(q: Tensor, k: Tensor, v: Tensor, params: AttentionParams) -> List[HeadTriple]:
    """
    Project queries, keys and values once per head.

    Args:
        q: T_Q x d_Q queries
        k: T_K x d_K keys
        v: T_V x d_V values (T_V == T_K)
        params: per-head W^Q, W^K, W^V

    Returns:
        [(Q_i, K_i, V_i)] with Q_i = q·W_i^Q etc., each T x d_m
    """
    if k.shape[0] != v.shape[0]:
        raise DimensionError(f"keys ({k.shape[0]} rows) and values ({v.shape[0]} rows) are not aligned")
    heads = []
    for i in range(params.head_count):
        for label, x, w in (("Q", q, params.w_q[i]), ("K", k, params.w_k[i]), ("V", v, params.w_v[i])):
            if x.shape[1] != w.shape[0]:
                raise DimensionError(
                    f"head {i}: {label} input width {x.shape[1]} does not match W^{label} {w.shape}"
                )
        heads.append((
            ops.matmul(q, params.w_q[i]),
            ops.matmul(k, params.w_k[i]),
            ops.matmul(v, params.w_v[i]),
        ))
    return heads


def attend(q_i: Tensor, k_i: Tensor, v_i: Tensor, scaled: bool = False) -> Tuple[Tensor, Tensor]:
    """Single head: (softmax(Q_i K_iᵀ) V_i, attention weights)."""
    logits = ops.matmul(q_i, ops.transpose(k_i))
    if scaled:
        logits = ops.scale(logits, 1.0 / math.sqrt(q_i.shape[1]))
    weights = ops.softmax_rows(logits)
    return ops.matmul(weights, v_i), weights


def multi_head_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    params: AttentionParams,
    scaled: bool = False,
    weights_out: Optional[List[Tensor]] = None,
) -> Tensor:
    """
    Concatenate softmax((q W_i^Q)(k W_i^K)ᵀ)(v W_i^V) over heads.

    Args:
        q, k, v: query, key and value tensors
        params: projections
        scaled: divide logits by sqrt(d_m); off by default
        weights_out: if given, receives each head's T_Q x T_K weights

    Returns:
        T_Q x (t · d_m) tensor, heads in order
    """
    outputs = []
    for q_i, k_i, v_i in project_heads(q, k, v, params):
        head, weights = attend(q_i, k_i, v_i, scaled=scaled)
        outputs.append(head)
        if weights_out is not None:
            weights_out.append(weights)
    return ops.concat(outputs, axis=1)

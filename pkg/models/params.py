"""
Pydantic containers for the learnable tensors of the model.
Every container can enumerate its tensors under stable dotted names.
"""

from typing import Dict, Iterator, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from numerics.tensor import Tensor
from utils.errors import CheckpointError

NamedTensors = Iterator[Tuple[str, Tensor]]


class _ParamGroup(BaseModel):
    """Shared behavior of parameter containers."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    def named_tensors(self, prefix: str = "") -> NamedTensors:
        raise NotImplementedError

    def tensors(self) -> List[Tensor]:
        return [t for _, t in self.named_tensors()]

    def zero_grad(self) -> None:
        for tensor in self.tensors():
            tensor.zero_grad()


def _is_square(t: Tensor, side: int) -> bool:
    return t.shape == (side, side)


class EdgeWeightParams(_ParamGroup):
    """Scalar edge scorer alpha_ij = sigmoid(a · [x_i || x_j] + b)."""

    a: Tensor
    b: Tensor

    @model_validator(mode="after")
    def validate_shapes(self) -> "EdgeWeightParams":
        if self.a.data.ndim != 1 or self.a.shape[0] % 2:
            raise ValueError(f"edge vector a must be 1-D with even length, got {self.a.shape}")
        if self.b.size != 1:
            raise ValueError(f"edge bias b must hold one value, got {self.b.shape}")
        return self

    @property
    def feature_dim(self) -> int:
        return self.a.shape[0] // 2

    def named_tensors(self, prefix: str = "") -> NamedTensors:
        yield f"{prefix}a", self.a
        yield f"{prefix}b", self.b


class AttentionParams(_ParamGroup):
    """Per-head query/key/value projections, each d_in x d_m."""

    w_q: List[Tensor]
    w_k: List[Tensor]
    w_v: List[Tensor]

    @model_validator(mode="after")
    def validate_heads(self) -> "AttentionParams":
        if not self.w_q or not (len(self.w_q) == len(self.w_k) == len(self.w_v)):
            raise ValueError("attention needs the same non-zero number of Q, K and V projections")
        head_dim = self.w_q[0].shape[1]
        for i, (wq, wk, wv) in enumerate(zip(self.w_q, self.w_k, self.w_v)):
            for label, w in (("Q", wq), ("K", wk), ("V", wv)):
                if w.data.ndim != 2 or w.shape[1] != head_dim:
                    raise ValueError(f"head {i} W^{label} has shape {w.shape}; expected (*, {head_dim})")
        return self

    @property
    def head_count(self) -> int:
        return len(self.w_q)

    @property
    def head_dim(self) -> int:
        return self.w_q[0].shape[1]

    def named_tensors(self, prefix: str = "") -> NamedTensors:
        for i in range(self.head_count):
            yield f"{prefix}{i}.w_q", self.w_q[i]
            yield f"{prefix}{i}.w_k", self.w_k[i]
            yield f"{prefix}{i}.w_v", self.w_v[i]


class GCParams(_ParamGroup):
    """Two-step graph convolution transforms plus the per-head update matrices."""

    w_r1: Tensor
    w_01: Tensor
    w_r2: Tensor
    w_02: Tensor
    update_heads: List[Tensor]

    @model_validator(mode="after")
    def validate_shapes(self) -> "GCParams":
        dim = self.w_r1.shape[0] if self.w_r1.data.ndim == 2 else -1
        for label in ("w_r1", "w_01", "w_r2", "w_02"):
            if not _is_square(getattr(self, label), dim):
                raise ValueError(f"{label} must be {dim}x{dim}, got {getattr(self, label).shape}")
        heads = len(self.update_heads)
        if heads == 0 or dim % heads:
            raise ValueError(f"feature dim {dim} not divisible by update head count {heads}")
        chunk = dim // heads
        for i, w in enumerate(self.update_heads):
            if not _is_square(w, chunk):
                raise ValueError(f"update head {i} must be {chunk}x{chunk}, got {w.shape}")
        return self

    @property
    def feature_dim(self) -> int:
        return self.w_r1.shape[0]

    @property
    def head_count(self) -> int:
        return len(self.update_heads)

    def named_tensors(self, prefix: str = "") -> NamedTensors:
        yield f"{prefix}w_r1", self.w_r1
        yield f"{prefix}w_01", self.w_01
        yield f"{prefix}w_r2", self.w_r2
        yield f"{prefix}w_02", self.w_02
        for i, w in enumerate(self.update_heads):
            yield f"{prefix}update.{i}", w


class BlockParams(_ParamGroup):
    """One Grapher block and the FFN block that follows it."""

    w_in: Tensor
    w_out: Tensor
    gc: GCParams
    edge: EdgeWeightParams
    attn: AttentionParams
    ffn_w1: Tensor
    ffn_w2: Tensor

    def named_tensors(self, prefix: str = "") -> NamedTensors:
        yield f"{prefix}w_in", self.w_in
        yield from self.gc.named_tensors(f"{prefix}gc.")
        yield from self.edge.named_tensors(f"{prefix}edge.")
        yield from self.attn.named_tensors(f"{prefix}attn.")
        yield f"{prefix}w_out", self.w_out
        yield f"{prefix}ffn.w_1", self.ffn_w1
        yield f"{prefix}ffn.w_2", self.ffn_w2


class StemParams(_ParamGroup):
    """Patch projection (stride-G_p convolution) and the pointwise convolution."""

    patch_kernel: Tensor
    pointwise_kernel: Tensor

    def named_tensors(self, prefix: str = "") -> NamedTensors:
        yield f"{prefix}patch_kernel", self.patch_kernel
        yield f"{prefix}pointwise_kernel", self.pointwise_kernel


class HeadParams(_ParamGroup):
    """Two pointwise convolutions ending in one channel."""

    k_h1: Tensor
    b_h1: Tensor
    k_h2: Tensor
    b_h2: Tensor

    def named_tensors(self, prefix: str = "") -> NamedTensors:
        yield f"{prefix}k_h1", self.k_h1
        yield f"{prefix}b_h1", self.b_h1
        yield f"{prefix}k_h2", self.k_h2
        yield f"{prefix}b_h2", self.b_h2


class ModelParams(_ParamGroup):
    """Full set of learnable tensors."""

    stem: StemParams
    pos_emb: Tensor
    blocks: List[BlockParams]
    downsample: List[Tensor]
    head: HeadParams

    def named_tensors(self, prefix: str = "") -> NamedTensors:
        yield from self.stem.named_tensors(f"{prefix}stem.")
        yield f"{prefix}pos_emb", self.pos_emb
        for i, block in enumerate(self.blocks):
            yield from block.named_tensors(f"{prefix}blocks.{i}.")
        for i, w in enumerate(self.downsample):
            yield f"{prefix}downsample.{i}", w
        yield from self.head.named_tensors(f"{prefix}head.")

    def values(self) -> Dict[str, np.ndarray]:
        """Copies of every tensor's values, keyed by name."""
        return {name: t.data.copy() for name, t in self.named_tensors()}

    def gradients(self) -> Dict[str, np.ndarray]:
        """Current gradients keyed by name; untouched tensors report zeros."""
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self.named_tensors()
        }

    def load_values(self, values: Dict[str, np.ndarray]) -> None:
        """
        Replace tensor values by name.

        Raises:
            CheckpointError: missing/unknown names or shape mismatches (names the tensor)
        """
        named = dict(self.named_tensors())
        unknown = sorted(set(values) - set(named))
        if unknown:
            raise CheckpointError(f"unknown tensor {unknown[0]}")
        for name, tensor in named.items():
            if name not in values:
                raise CheckpointError(f"missing tensor {name}")
            array = np.asarray(values[name], dtype=np.float64)
            if array.shape != tensor.shape:
                raise CheckpointError(
                    f"shape mismatch for tensor {name}: checkpoint {array.shape}, model {tensor.shape}"
                )
            tensor.data = array.copy()
            tensor.zero_grad()

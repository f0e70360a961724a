"""
Pydantic model for the KNN patch graph.
"""

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from numerics.tensor import Tensor


class PatchGraph(BaseModel):
    """
    Directed KNN graph over N patch nodes.

    ``neighbors[i]`` lists the K neighbors of node i in rank order (self
    excluded); the self-loop is implicit. Edge weights are absent until
    ``compute_edge_weights`` fills them in.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    neighbors: np.ndarray = Field(..., description="int64 array N x K of neighbor indices")
    metric: str = Field(..., description="Similarity used to rank neighbors")
    requested_k: int = Field(..., description="K_nn asked for before clamping")
    alpha: Optional[Tensor] = Field(default=None, description="N x K neighbor edge weights")
    alpha_self: Optional[Tensor] = Field(default=None, description="N x 1 self-loop weights")
    warnings: List[str] = Field(default_factory=list, description="Clamp / tie notes")

    @property
    def node_count(self) -> int:
        return int(self.neighbors.shape[0])

    @property
    def k(self) -> int:
        return int(self.neighbors.shape[1])

    @property
    def weighted(self) -> bool:
        return self.alpha_self is not None

    @property
    def degree(self) -> np.ndarray:
        """c_i = |N_i| for every node, as an N x 1 float column."""
        return np.full((self.node_count, 1), float(self.k))

    def neighbor_lists(self) -> List[List[int]]:
        return [[int(j) for j in row] for row in self.neighbors]

    def with_weights(self, alpha: Optional[Tensor], alpha_self: Tensor) -> "PatchGraph":
        return self.model_copy(update={"alpha": alpha, "alpha_self": alpha_self})

    def permuted(self, perm: np.ndarray) -> "PatchGraph":
        """
        Relabel nodes so that new node p is old node perm[p]; weights are dropped.
        """
        perm = np.asarray(perm, dtype=np.int64)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(perm.size)
        neighbors = inverse[self.neighbors[perm]]
        return PatchGraph(
            neighbors=neighbors,
            metric=self.metric,
            requested_k=self.requested_k,
            warnings=list(self.warnings),
        )

"""Deterministic double-precision tensor core with tape-based gradients."""

from numerics.tensor import ComputationTape, Tensor, constant, parameter

__all__ = ["ComputationTape", "Tensor", "constant", "parameter"]

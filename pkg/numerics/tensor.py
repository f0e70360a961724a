"""
Dense double-precision tensor and the computation tape used for
reverse-mode gradients.
"""

from __future__ import annotations

from contextvars import ContextVar
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.logging_config import get_logger

logger = get_logger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_active_tape: ContextVar[Optional["ComputationTape"]] = ContextVar("active_tape", default=None)


class Tensor:
    """
    Dense real array with a gradient slot.

    Values are stored as a float64 numpy array. The array is treated as
    immutable by every operation; only the optimizer and the
    finite-difference oracle replace or perturb ``data`` between passes.
    """

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        array = np.array(data, dtype=np.float64)
        if array.ndim == 0:
            array = array.reshape(1)
        self.data: np.ndarray = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def wrap(cls, array: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """Wrap a freshly computed array without copying it."""
        tensor = cls.__new__(cls)
        tensor.data = array
        tensor.grad = None
        tensor.requires_grad = requires_grad
        tensor.name = None
        return tensor

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        # Additive: a tensor feeding several consumers sums their contributions
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + grad

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"

    # Operator sugar; the functional forms live in numerics.ops
    def __matmul__(self, other: "Tensor") -> "Tensor":
        from numerics import ops
        return ops.matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        from numerics import ops
        return ops.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from numerics import ops
        return ops.sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from numerics import ops
        return ops.mul(self, other)


@dataclass
class TapeRecord:
    """One executed operation and what its backward pass needs."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class ComputationTape:
    """
    Ordered record of operations executed while the tape is active.

    Use as a context manager around a single forward pass, then call
    ``backward`` on a scalar output. Gradients land in the ``grad`` slot
    of every leaf tensor that requires them.
    """

    def __init__(self, fault_scale: float = 1.0):
        """
        Args:
            fault_scale: multiplier applied to leaf gradients. Anything other
                than 1.0 deliberately corrupts backward (negative control).
        """
        self.records: List[TapeRecord] = []
        self.visited: List[int] = []
        self.fault_scale = fault_scale
        self._token = None

    def __enter__(self) -> "ComputationTape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward: BackwardFn) -> None:
        self.records.append(TapeRecord(op=op, inputs=inputs, output=output, backward=backward))

    def backward(self, output: Tensor, seed: Optional[np.ndarray] = None) -> None:
        """
        Propagate gradients from ``output`` back to the leaves.

        Args:
            output: tensor produced on this tape
            seed: upstream gradient; defaults to ones (d output / d output)
        """
        if seed is None:
            seed = np.ones_like(output.data)
        elif seed.shape != output.data.shape:
            raise ValueError(f"seed shape {seed.shape} does not match output shape {output.shape}")

        grads: Dict[int, np.ndarray] = {id(output): np.array(seed, dtype=np.float64)}
        leaves: Dict[int, Tensor] = {}
        produced = {id(record.output) for record in self.records}
        if id(output) not in produced:
            leaves[id(output)] = output

        self.visited = []
        for index in range(len(self.records) - 1, -1, -1):
            record = self.records[index]
            upstream = grads.pop(id(record.output), None)
            if upstream is None:
                continue
            self.visited.append(index)
            input_grads = record.backward(upstream)
            for tensor, grad in zip(record.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                grads[key] = grads[key] + grad if key in grads else grad
                if key not in produced:
                    leaves[key] = tensor

        for key, tensor in leaves.items():
            grad = grads.get(key)
            if grad is None:
                continue
            tensor.accumulate_grad(grad * self.fault_scale if self.fault_scale != 1.0 else grad)

        logger.debug(f"Backward visited {len(self.visited)}/{len(self.records)} tape records")


def active_tape() -> Optional[ComputationTape]:
    """Return the tape currently recording, if any."""
    return _active_tape.get()


def constant(data: Any) -> Tensor:
    """Tensor that never requires a gradient."""
    return Tensor(data, requires_grad=False)


def parameter(data: Any, name: Optional[str] = None) -> Tensor:
    """Tensor that requires a gradient."""
    return Tensor(data, requires_grad=True, name=name)

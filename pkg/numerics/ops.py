"""
Differentiable tensor operations.

Each op computes its forward value with numpy and, when any input requires
a gradient and a tape is active, records a closure returning the gradient
for every input (None where an input needs none).
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from numerics.tensor import BackwardFn, Tensor, active_tape
from utils.errors import DimensionError


def _result(op: str, data: np.ndarray, inputs: Tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor.wrap(data, requires_grad=requires_grad)
    tape = active_tape()
    if requires_grad and tape is not None:
        tape.record(op, inputs, out, backward)
    return out


def _require_2d(op: str, *tensors: Tensor) -> None:
    for t in tensors:
        if t.data.ndim != 2:
            raise DimensionError(f"{op} expects 2-D tensors, got shape {t.shape}")


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    # Only the row-vector / column-vector / single-value cases the model uses
    if a.shape == b.shape:
        return a.shape
    if a.data.ndim == 2 and b.data.ndim == 2:
        rows = a.shape[0] if b.shape[0] in (1, a.shape[0]) else None
        cols = a.shape[1] if b.shape[1] in (1, a.shape[1]) else None
        if rows is not None and cols is not None:
            return a.shape
    if b.size == 1:
        return a.shape
    raise DimensionError(f"{op} cannot broadcast {b.shape} onto {a.shape}")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) == 2 and grad.ndim == 2:
        if shape[0] == 1 and grad.shape[0] != 1:
            grad = grad.sum(axis=0, keepdims=True)
        if shape[1] == 1 and grad.shape[1] != 1:
            grad = grad.sum(axis=1, keepdims=True)
        return grad
    return np.full(shape, grad.sum())


def _expand(t: Tensor, shape: Tuple[int, ...]) -> np.ndarray:
    if t.shape == shape or t.data.ndim == len(shape):
        return t.data
    return t.data.reshape(())


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an m×k and a k×n tensor."""
    _require_2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    a_data, b_data = a.data, b.data

    def backward(g: np.ndarray):
        return (
            g @ b_data.T if a.requires_grad else None,
            a_data.T @ g if b.requires_grad else None,
        )

    return _result("matmul", a_data @ b_data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a row, a column or a single value."""
    shape = _broadcast_shape("add", a, b)
    a_shape, b_shape = a.shape, b.shape

    def backward(g: np.ndarray):
        return (
            _unbroadcast(g, a_shape) if a.requires_grad else None,
            _unbroadcast(g, b_shape) if b.requires_grad else None,
        )

    return _result("add", a.data + _expand(b, shape), (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference with the broadcasting rules of ``add``."""
    shape = _broadcast_shape("sub", a, b)
    a_shape, b_shape = a.shape, b.shape

    def backward(g: np.ndarray):
        return (
            _unbroadcast(g, a_shape) if a.requires_grad else None,
            -_unbroadcast(g, b_shape) if b.requires_grad else None,
        )

    return _result("sub", a.data - _expand(b, shape), (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with the broadcasting rules of ``add``."""
    shape = _broadcast_shape("mul", a, b)
    a_data, b_data = a.data, _expand(b, shape)
    b_shape = b.shape

    def backward(g: np.ndarray):
        return (
            g * b_data if a.requires_grad else None,
            _unbroadcast(g * a_data, b_shape) if b.requires_grad else None,
        )

    return _result("mul", a_data * b_data, (a, b), backward)


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a constant."""
    factor = float(factor)

    def backward(g: np.ndarray):
        return (g * factor,)

    return _result("scale", a.data * factor, (a,), backward)


def relu(t: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at 0 is 0."""
    mask = t.data > 0

    def backward(g: np.ndarray):
        return (g * mask,)

    return _result("relu", np.where(mask, t.data, 0.0), (t,), backward)


def sigmoid(t: Tensor) -> Tensor:
    """Elementwise logistic function."""
    out = np.exp(-np.logaddexp(0.0, -t.data))

    def backward(g: np.ndarray):
        return (g * out * (1.0 - out),)

    return _result("sigmoid", out, (t,), backward)


def absolute(t: Tensor) -> Tensor:
    """Elementwise |x|; the subgradient at 0 is 0."""
    sign = np.sign(t.data)

    def backward(g: np.ndarray):
        return (g * sign,)

    return _result("abs", np.abs(t.data), (t,), backward)


def softmax_rows(t: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction."""
    _require_2d("softmax_rows", t)
    shifted = t.data - t.data.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    out = exps / exps.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray):
        inner = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - inner),)

    return _result("softmax_rows", out, (t,), backward)


def transpose(t: Tensor) -> Tensor:
    _require_2d("transpose", t)

    def backward(g: np.ndarray):
        return (g.T,)

    return _result("transpose", t.data.T.copy(), (t,), backward)


def reshape(t: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != t.size:
        raise DimensionError(f"cannot reshape {t.shape} into {shape}")
    original = t.shape

    def backward(g: np.ndarray):
        return (g.reshape(original),)

    return _result("reshape", t.data.reshape(shape).copy(), (t,), backward)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    """Join tensors along ``axis``; every other extent must agree."""
    parts = list(parts)
    if not parts:
        raise DimensionError("concat needs at least one part")
    ndim = parts[0].data.ndim
    if axis < 0 or axis >= ndim:
        raise DimensionError(f"concat axis {axis} out of range for rank {ndim}")
    for p in parts[1:]:
        if p.data.ndim != ndim or any(
            p.shape[d] != parts[0].shape[d] for d in range(ndim) if d != axis
        ):
            raise DimensionError(
                f"concat shape mismatch on axis {axis}: {parts[0].shape} vs {p.shape}"
            )
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g: np.ndarray):
        pieces = np.split(g, bounds, axis=axis)
        return tuple(piece if p.requires_grad else None for p, piece in zip(parts, pieces))

    return _result("concat", np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward)


def take_slice(t: Tensor, start: int, stop: int, axis: int) -> Tensor:
    """Contiguous slice [start, stop) along ``axis``."""
    if not 0 <= start < stop <= t.shape[axis]:
        raise DimensionError(f"slice [{start}, {stop}) out of range for axis {axis} of {t.shape}")
    index = [slice(None)] * t.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    full_shape = t.shape

    def backward(g: np.ndarray):
        grad = np.zeros(full_shape)
        grad[index] = g
        return (grad,)

    return _result("slice", t.data[index].copy(), (t,), backward)


def split(t: Tensor, sizes: Sequence[int], axis: int) -> List[Tensor]:
    """Cut ``t`` into consecutive pieces of the given sizes along ``axis``."""
    if sum(sizes) != t.shape[axis]:
        raise DimensionError(f"split sizes {list(sizes)} do not cover axis {axis} of {t.shape}")
    pieces = []
    start = 0
    for size in sizes:
        pieces.append(take_slice(t, start, start + size, axis))
        start += size
    return pieces


def gather_rows(t: Tensor, index: np.ndarray) -> Tensor:
    """Rows of ``t`` selected by an integer index vector (repeats allowed)."""
    _require_2d("gather_rows", t)
    index = np.asarray(index, dtype=np.int64)
    rows = t.shape[0]

    def backward(g: np.ndarray):
        grad = np.zeros((rows, g.shape[1]))
        np.add.at(grad, index, g)
        return (grad,)

    return _result("gather_rows", t.data[index], (t,), backward)


def sum_all(t: Tensor) -> Tensor:
    shape = t.shape

    def backward(g: np.ndarray):
        return (np.full(shape, g.reshape(-1)[0]),)

    return _result("sum", np.array([t.data.sum()]), (t,), backward)


def mean_all(t: Tensor) -> Tensor:
    shape = t.shape
    count = float(t.size)

    def backward(g: np.ndarray):
        return (np.full(shape, g.reshape(-1)[0] / count),)

    return _result("mean", np.array([t.data.sum() / count]), (t,), backward)


def maybe_add(acc: Optional[Tensor], term: Tensor) -> Tensor:
    """Running sum helper that keeps the first term untouched."""
    return term if acc is None else add(acc, term)

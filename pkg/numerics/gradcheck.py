"""
Finite-difference oracle for tape gradients.
Compares analytic gradients with central differences, parameter by parameter.
"""

from typing import TYPE_CHECKING, Callable, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from config.logging_config import get_logger
from numerics.tensor import ComputationTape, Tensor
from utils.errors import OracleError

logger = get_logger(__name__)

if TYPE_CHECKING:
    from models.params import ModelParams

ParamSource = Union[Mapping[str, Tensor], "ModelParams"]


class GradCheckReport(BaseModel):
    """Outcome of one finite-difference comparison."""

    max_rel_error: float = Field(..., description="Max over scalars of |analytic - numeric| / max(1, |analytic|, |numeric|)")
    worst_parameter: Optional[str] = Field(default=None, description="Tensor holding the worst scalar")
    worst_index: Optional[int] = Field(default=None, description="Flat index of the worst scalar")
    scalar_count: int = Field(default=0, description="Number of scalars compared")

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def _named(params: ParamSource) -> List[Tuple[str, Tensor]]:
    if hasattr(params, "named_tensors"):
        return list(params.named_tensors())
    return list(params.items())


def _evaluate(f: Callable[[ParamSource], Tensor], params: ParamSource, name: str) -> float:
    value = f(params).item()
    if not np.isfinite(value):
        raise OracleError(f"objective is not finite ({value})", parameter=name)
    return value


def analytic_gradients(
    f: Callable[[ParamSource], Tensor],
    params: ParamSource,
    fault_scale: float = 1.0,
) -> List[Tuple[str, np.ndarray]]:
    """
    Run ``f`` once on a fresh tape and return d f / d tensor for every named tensor.
    Tensors the objective never touches get a zero gradient.
    """
    named = _named(params)
    for _, tensor in named:
        tensor.zero_grad()
    with ComputationTape(fault_scale=fault_scale) as tape:
        out = f(params)
    if out.size != 1:
        raise ValueError(f"grad_check objective must be scalar, got shape {out.shape}")
    if not np.isfinite(out.item()):
        raise OracleError(f"objective is not finite ({out.item()})", parameter="<unperturbed>")
    tape.backward(out)
    grads = []
    for name, tensor in named:
        grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        grads.append((name, grad.copy()))
        tensor.zero_grad()
    return grads


def grad_check(
    f: Callable[[ParamSource], Tensor],
    params: ParamSource,
    h: float = 1e-5,
    fault_scale: float = 1.0,
    names: Optional[Iterable[str]] = None,
) -> GradCheckReport:
    """
    Compare tape gradients against central differences.

    Args:
        f: deterministic scalar-valued function of the parameters
        params: ModelParams or a mapping name -> Tensor
        h: central-difference step
        fault_scale: forwarded to the tape; != 1.0 corrupts backward
        names: optional subset of tensor names to check

    Returns:
        GradCheckReport with the max relative error and where it occurred
    """
    wanted = set(names) if names is not None else None
    analytic = dict(analytic_gradients(f, params, fault_scale=fault_scale))

    report = GradCheckReport(max_rel_error=0.0)
    for name, tensor in _named(params):
        if wanted is not None and name not in wanted:
            continue
        flat = tensor.data.reshape(-1)
        grad = analytic[name].reshape(-1)
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + h
            try:
                plus = _evaluate(f, params, name)
                flat[index] = original - h
                minus = _evaluate(f, params, name)
            finally:
                flat[index] = original
            numeric = (plus - minus) / (2.0 * h)
            rel = abs(grad[index] - numeric) / max(1.0, abs(grad[index]), abs(numeric))
            report.scalar_count += 1
            if rel > report.max_rel_error or report.worst_parameter is None:
                report.max_rel_error = float(rel)
                report.worst_parameter = name
                report.worst_index = index

    logger.info(
        f"Gradient check over {report.scalar_count} scalars: "
        f"max rel err {report.max_rel_error:.3e} at {report.worst_parameter}[{report.worst_index}]"
    )
    return report

"""
Exception hierarchy for the age-estimation toolkit.
The CLI maps these onto its exit-code contract.
"""

from typing import Optional


class VigAgeError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(VigAgeError, ValueError):
    """Raised when tensor shapes are incompatible for an operation."""


class ConfigError(VigAgeError, ValueError):
    """Raised for invalid runtime configuration."""


class GraphStateError(VigAgeError, RuntimeError):
    """Raised when a patch graph is used before its edge weights are set."""


class PnmParseError(VigAgeError, ValueError):
    """Raised when a PGM/PPM byte stream cannot be decoded."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DatasetLoadError(VigAgeError, ValueError):
    """Raised when a dataset directory or labels file cannot be loaded."""

    def __init__(self, message: str, row: Optional[int] = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class CheckpointError(VigAgeError, ValueError):
    """Raised for malformed checkpoints or checkpoint/config shape mismatches."""


class OracleError(VigAgeError, ArithmeticError):
    """Raised when the finite-difference oracle sees a non-finite objective."""

    def __init__(self, message: str, parameter: str):
        super().__init__(f"{message} (parameter {parameter})")
        self.parameter = parameter


class DivergenceError(VigAgeError, ArithmeticError):
    """Raised when training produces a non-finite loss or gradient."""

    def __init__(
        self,
        message: str,
        epoch: Optional[int] = None,
        step: Optional[int] = None,
        parameter: Optional[str] = None,
    ):
        details = []
        if epoch is not None:
            details.append(f"epoch={epoch}")
        if step is not None:
            details.append(f"step={step}")
        if parameter is not None:
            details.append(f"parameter={parameter}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)
        self.epoch = epoch
        self.step = step
        self.parameter = parameter

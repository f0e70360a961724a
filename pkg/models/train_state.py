"""
Pydantic models for optimizer state and training history.
"""

from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from models.params import ModelParams


class EpochRecord(BaseModel):
    """Train / validation MAE after one epoch."""

    epoch: int
    train_mae: float
    val_mae: Optional[float] = None

    def log_line(self) -> str:
        """``epoch<TAB>train_mae<TAB>val_mae`` with 6 decimals."""
        val = f"{self.val_mae:.6f}" if self.val_mae is not None else "nan"
        return f"{self.epoch}\t{self.train_mae:.6f}\t{val}"


class TrainState(BaseModel):
    """Adaptive-moment accumulators, step counter, RNG state and history."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    step: int = 0
    first_moment: Dict[str, np.ndarray] = Field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = Field(default_factory=dict)
    rng_state: Dict[str, Any] = Field(default_factory=dict)
    history: List[EpochRecord] = Field(default_factory=list)

    @classmethod
    def initial(cls, params: ModelParams, rng: Optional[np.random.Generator] = None) -> "TrainState":
        return cls(
            first_moment={name: np.zeros_like(t.data) for name, t in params.named_tensors()},
            second_moment={name: np.zeros_like(t.data) for name, t in params.named_tensors()},
            rng_state=dict(rng.bit_generator.state) if rng is not None else {},
        )

    def record_epoch(self, record: EpochRecord) -> None:
        """Append to the history; epochs must strictly increase."""
        if self.history and record.epoch <= self.history[-1].epoch:
            raise ValueError(f"epoch {record.epoch} does not follow {self.history[-1].epoch}")
        self.history.append(record)

    @property
    def final(self) -> Optional[EpochRecord]:
        return self.history[-1] if self.history else None

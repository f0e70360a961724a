"""
Pydantic models for labelled images and datasets.
"""

from typing import List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import LABEL_MAX, LABEL_MIN
from numerics.tensor import Tensor


class Sample(BaseModel):
    """One H x W x C image (integer pixels 0-255) with its age in years."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    image: Tensor = Field(..., description="H x W x C pixel tensor, values 0-255")
    label: float = Field(..., description="Age in years")
    source: Optional[str] = Field(default=None, description="File name the sample came from")

    @field_validator("image")
    @classmethod
    def validate_image(cls, v: Tensor) -> Tensor:
        """Validate image rank and channel count."""
        if v.data.ndim != 3 or v.shape[2] not in (1, 3) or min(v.shape) < 1:
            raise ValueError(f"image must be H x W x C with C in (1, 3), got {v.shape}")
        return v

    @field_validator("label")
    @classmethod
    def validate_label(cls, v: float) -> float:
        """Validate age lies in the supported range."""
        if not LABEL_MIN <= v <= LABEL_MAX:
            raise ValueError(f"age {v} outside [{LABEL_MIN}, {LABEL_MAX}]")
        return v

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.image.shape)


class Dataset(BaseModel):
    """Ordered collection of samples sharing one image shape."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    samples: List[Sample] = Field(default_factory=list)
    provenance: Literal["synthetic", "directory"] = Field(default="directory")

    @model_validator(mode="after")
    def validate_shapes(self) -> "Dataset":
        """Validate all samples share H, W, C."""
        if self.samples:
            shape = self.samples[0].image_shape
            for i, sample in enumerate(self.samples):
                if sample.image_shape != shape:
                    raise ValueError(f"sample {i} has shape {sample.image_shape}, expected {shape}")
        return self

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def labels(self) -> List[float]:
        return [s.label for s in self.samples]

    @property
    def image_shape(self) -> Optional[Tuple[int, int, int]]:
        return self.samples[0].image_shape if self.samples else None

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(samples=[self.samples[i] for i in indices], provenance=self.provenance)

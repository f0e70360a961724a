"""
Pydantic models for model, training and run configuration.
"""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ModelConfig(BaseModel):
    """
    Hyperparameters of the patch-graph age regressor.
    Every shape in ModelParams is derived from these fields.
    """

    model_config = ConfigDict(extra="forbid")

    # Input
    image_height: int = Field(default=32, gt=0, description="Expected image height H")
    image_width: int = Field(default=32, gt=0, description="Expected image width W")
    channels: Literal[1, 3] = Field(default=1, description="Image channels C")

    # Patch graph
    grid_side: int = Field(default=8, gt=0, description="Patch grid side G_p (N = G_p² nodes)")
    knn: int = Field(default=9, ge=1, description="Neighbors per node K_nn")
    metric: Literal["cosine", "euclidean"] = Field(default="cosine", description="KNN similarity")

    # Backbone
    feature_dim: int = Field(default=64, gt=0, description="Node feature width D")
    gc_heads: int = Field(default=4, gt=0, description="Multi-head update count t_gc")
    attn_heads: int = Field(default=4, gt=0, description="Attention head count t_attn")
    block_count: int = Field(default=4, gt=0, description="Grapher+FFN block pairs B")
    stage_count: int = Field(default=2, gt=0, description="Pyramid stages S")
    stage_downsample: Optional[List[bool]] = Field(
        default=None, description="Downsample after stage s (length S-1); all True when omitted"
    )

    # Switches
    use_attention: bool = Field(default=True, description="Self-attention after the multi-head update")
    scaled_attention: bool = Field(default=False, description="Divide attention logits by sqrt(d_m)")
    normalize_step2: bool = Field(default=False, description="Apply alpha/c weighting in the second GC step")
    static_graph: bool = Field(default=False, description="One KNN graph per stage instead of per block")
    residual: bool = Field(default=True, description="Residual connections in Grapher/FFN blocks")

    seed: int = Field(default=0, ge=0, description="Parameter initialization seed")

    @model_validator(mode="after")
    def validate_shapes(self) -> "ModelConfig":
        """Validate divisibility and per-stage graph sizes."""
        if self.image_height % self.grid_side or self.image_width % self.grid_side:
            raise ValueError(
                f"image {self.image_height}x{self.image_width} not divisible by grid_side {self.grid_side}"
            )
        if self.feature_dim % self.gc_heads:
            raise ValueError(f"feature_dim {self.feature_dim} not divisible by gc_heads {self.gc_heads}")
        if self.feature_dim % self.attn_heads:
            raise ValueError(f"feature_dim {self.feature_dim} not divisible by attn_heads {self.attn_heads}")
        if self.block_count % self.stage_count:
            raise ValueError(f"block_count {self.block_count} not divisible by stage_count {self.stage_count}")
        if self.stage_downsample is not None and len(self.stage_downsample) != self.stage_count - 1:
            raise ValueError(f"stage_downsample needs {self.stage_count - 1} entries")

        side = self.grid_side
        for stage, flag in enumerate(self.downsample_flags()):
            if flag:
                if side % 2:
                    raise ValueError(f"grid side {side} before stage {stage + 1} is odd; cannot downsample")
                side //= 2
        for stage, side in enumerate(self.stage_grid_sides()):
            if side * side < self.knn + 1:
                raise ValueError(f"stage {stage} has {side * side} nodes, fewer than knn + 1 = {self.knn + 1}")
        return self

    def downsample_flags(self) -> List[bool]:
        """Whether a downsample follows each stage except the last."""
        if self.stage_downsample is None:
            return [True] * (self.stage_count - 1)
        return list(self.stage_downsample)

    def stage_grid_sides(self) -> List[int]:
        sides = [self.grid_side]
        for flag in self.downsample_flags():
            sides.append(sides[-1] // 2 if flag else sides[-1])
        return sides

    @property
    def node_count(self) -> int:
        return self.grid_side * self.grid_side

    @property
    def patch_dim(self) -> int:
        """Flattened pixel count of one patch: (H/G_p)·(W/G_p)·C."""
        return (self.image_height // self.grid_side) * (self.image_width // self.grid_side) * self.channels

    @property
    def blocks_per_stage(self) -> int:
        return self.block_count // self.stage_count

    @classmethod
    def tiny(cls, **overrides: Any) -> "ModelConfig":
        """Verification config: 16x16x1 image, G_p=4, D=8, t=2, K_nn=3, B=2, S=1."""
        values: Dict[str, Any] = dict(
            image_height=16,
            image_width=16,
            channels=1,
            grid_side=4,
            knn=3,
            feature_dim=8,
            gc_heads=2,
            attn_heads=2,
            block_count=2,
            stage_count=1,
        )
        values.update(overrides)
        return cls(**values)


class TrainConfig(BaseModel):
    """Optimizer and loop settings."""

    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(default=1e-3, ge=0.0, lt=1.0, description="Step size (0 freezes parameters)")
    beta1: float = Field(default=0.9, gt=0.0, lt=1.0, description="First-moment decay")
    beta2: float = Field(default=0.999, gt=0.0, lt=1.0, description="Second-moment decay")
    epsilon: float = Field(default=1e-8, gt=0.0, lt=1.0, description="Denominator guard")
    batch_size: int = Field(default=16, ge=1, description="Samples per optimizer step")
    epochs: int = Field(default=30, ge=1, description="Passes over the training split")
    seed: int = Field(default=0, ge=0, description="Shuffling / split seed")
    val_fraction: float = Field(default=0.2, ge=0.0, lt=1.0, description="Share of samples held out")


MODEL_KEYS = tuple(ModelConfig.model_fields)
TRAIN_KEYS = tuple(TrainConfig.model_fields)


class RunConfig(BaseModel):
    """
    Flat merge of ModelConfig, TrainConfig and command paths.
    Keys mirror the command-line flag names; unknown keys are rejected.
    """

    model_config = ConfigDict(extra="forbid")

    # ModelConfig
    image_height: int = 32
    image_width: int = 32
    channels: Literal[1, 3] = 1
    grid_side: int = 8
    knn: int = 9
    metric: Literal["cosine", "euclidean"] = "cosine"
    feature_dim: int = 64
    gc_heads: int = 4
    attn_heads: int = 4
    block_count: int = 4
    stage_count: int = 2
    stage_downsample: Optional[List[bool]] = None
    use_attention: bool = True
    scaled_attention: bool = False
    normalize_step2: bool = False
    static_graph: bool = False
    residual: bool = True

    # TrainConfig
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16
    epochs: int = 30
    val_fraction: float = 0.2

    # Shared
    seed: int = 0
    repeats: int = Field(default=1, ge=1)

    # Paths
    data: Optional[str] = None
    checkpoint: Optional[str] = None
    log: Optional[str] = None

    @field_validator("epochs")
    @classmethod
    def validate_epochs(cls, v: int) -> int:
        """Validate epoch count is positive."""
        if v < 1:
            raise ValueError("epochs must be >= 1")
        return v

    def to_model_config(self) -> ModelConfig:
        return ModelConfig(**{key: getattr(self, key) for key in MODEL_KEYS})

    def to_train_config(self, seed: Optional[int] = None) -> TrainConfig:
        values = {key: getattr(self, key) for key in TRAIN_KEYS}
        if seed is not None:
            values["seed"] = seed
        return TrainConfig(**values)

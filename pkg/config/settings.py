"""
Configuration settings for the ViG age estimator.
Loads environment variables and provides validation.
"""

from typing import Optional
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Logging
    log_level: str = Field(default="INFO", description="Root log level")
    log_json: bool = Field(default=False, description="Emit JSON log lines instead of colored text")
    log_file: Optional[str] = Field(default=None, description="Optional rotating log file")

    # Finite-difference oracle
    gradcheck_step: float = Field(default=1e-5, description="Central-difference step h")
    gradcheck_tolerance: float = Field(default=1e-4, description="Max relative error accepted by gradcheck")

    model_config = SettingsConfigDict(
        env_prefix="VIGAGE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level is one of the standard levels."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of {valid_levels}")
        return v.upper()

    @field_validator("gradcheck_step", "gradcheck_tolerance")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        """Validate oracle step and tolerance are positive."""
        if v <= 0:
            raise ValueError("Value must be positive")
        return v


# Global settings instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """
    Get the application settings singleton.
    Loads settings from environment on first call.
    """
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


# Checkpoint container
CHECKPOINT_MAGIC = b"VIGAGE01"
CHECKPOINT_CONFIG_ENTRY = "__config__"

# Dataset layout
LABELS_FILENAME = "labels.csv"
LABELS_COLUMNS = ("filename", "age")
IMAGE_FILENAME_PATTERN = "img_{index:05d}.pgm"

# Pixel and label ranges
PIXEL_SCALE = 255.0
LABEL_MIN = 1.0
LABEL_MAX = 120.0

# Synthetic generator
SYNTH_AGE_MIN = 16.0
SYNTH_AGE_MAX = 77.0
SYNTH_MAX_ARCS = 24
SYNTH_ARC_LENGTH = 8.0
SYNTH_ARC_VALUE = 30.0
SYNTH_NOISE = 8.0

# Position embedding init half-width
POS_EMB_SCALE = 0.02

# CLI exit codes
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGENCE = 3
EXIT_VERIFICATION = 4

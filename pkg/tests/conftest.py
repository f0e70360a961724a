"""
Shared fixtures: seeded generators, the tiny verification config and
ready-made parameters / images for it.
"""

import numpy as np
import pytest

from models.configs import ModelConfig
from numerics.tensor import Tensor
from services.training_service import init_params


@pytest.fixture
def rng():
    """Seeded generator so every test sees the same draws."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """16x16x1 image, G_p=4, D=8, t=2, K_nn=3, B=2, S=1."""
    return ModelConfig.tiny()


@pytest.fixture
def tiny_params(tiny_config):
    """Deterministic parameters for the tiny config."""
    return init_params(tiny_config, seed=0)


@pytest.fixture
def tiny_image(rng):
    """Random integer-valued 16x16x1 image."""
    return Tensor(rng.integers(0, 256, size=(16, 16, 1)).astype(np.float64))

"""
Tests for environment settings, run configuration and log formatting.
"""

import io
import json
import logging

import numpy as np
import pytest
from pydantic import ValidationError

import config.settings as settings_module
from config.logging_config import ColoredFormatter, JSONFormatter, console_formatter, setup_logging
from config.settings import Settings, get_settings
from models.configs import ModelConfig, RunConfig


@pytest.fixture
def fresh_settings(monkeypatch):
    """Reset the settings singleton around each test."""
    monkeypatch.setattr(settings_module, "_settings", None)
    yield
    settings_module._settings = None


def test_settings_read_prefixed_env(monkeypatch, fresh_settings):
    """VIGAGE_ variables override the defaults."""
    monkeypatch.setenv("VIGAGE_LOG_LEVEL", "debug")
    monkeypatch.setenv("VIGAGE_GRADCHECK_TOLERANCE", "1e-3")
    settings = get_settings()
    assert settings.log_level == "DEBUG"
    assert settings.gradcheck_tolerance == 1e-3
    assert get_settings() is settings


def test_settings_reject_bad_values():
    """Unknown log levels and non-positive oracle steps are invalid."""
    with pytest.raises(ValidationError):
        Settings(log_level="LOUD")
    with pytest.raises(ValidationError):
        Settings(gradcheck_step=0.0)


def test_model_config_divisibility():
    """feature_dim must split evenly over both head counts."""
    with pytest.raises(ValidationError, match="gc_heads"):
        ModelConfig.tiny(gc_heads=3)
    with pytest.raises(ValidationError, match="grid_side"):
        ModelConfig.tiny(grid_side=5)


def test_model_config_knn_needs_enough_nodes():
    """Each stage needs at least knn + 1 patches."""
    with pytest.raises(ValidationError, match="knn"):
        ModelConfig.tiny(knn=16)


def test_run_config_splits_into_model_and_train():
    """A flat run config yields consistent model and training configs."""
    run = RunConfig(grid_side=4, image_height=16, image_width=16, knn=3, learning_rate=0.05, seed=3)
    model = run.to_model_config()
    train = run.to_train_config(seed=9)
    assert model.grid_side == 4 and model.seed == 3
    assert train.learning_rate == 0.05 and train.seed == 9


def test_run_config_forbids_unknown_keys():
    """Typos in config files are rejected."""
    with pytest.raises(ValidationError):
        RunConfig(learning_rat=0.1)


def test_json_formatter_keeps_domain_extras():
    """epoch / step / parameter extras appear in the JSON line."""
    record = logging.LogRecord("training", logging.INFO, __file__, 1, "epoch done", None, None)
    record.epoch = 4
    record.parameter = "head.k_h1"
    payload = json.loads(JSONFormatter().format(record))
    assert payload["message"] == "epoch done"
    assert payload["epoch"] == 4
    assert payload["parameter"] == "head.k_h1"
    assert "step" not in payload


def test_json_formatter_handles_numpy_extras():
    """numpy scalars passed as extras serialize as plain numbers."""
    record = logging.LogRecord("training", logging.INFO, __file__, 1, "step", None, None)
    record.step = np.int64(7)
    assert json.loads(JSONFormatter().format(record))["step"] == 7


def test_console_formatter_plain_off_terminal():
    """Redirected streams get uncolored text; JSON wins when requested."""
    stream = io.StringIO()
    assert not isinstance(console_formatter(stream, use_json=False), ColoredFormatter)
    assert isinstance(console_formatter(stream, use_json=True), JSONFormatter)


def test_setup_logging_writes_to_given_stream():
    """Log lines go to the supplied stream, not stdout."""
    stream = io.StringIO()
    setup_logging(level="INFO", stream=stream)
    logging.getLogger("vigage.test").warning("ties broken")
    assert "ties broken" in stream.getvalue()

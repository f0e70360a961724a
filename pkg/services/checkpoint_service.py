"""
Binary model checkpoints.

Layout: the 8-byte magic, then one record per named tensor:
u32 name length, name bytes (UTF-8), u32 rank, u32 extents, f64 values.
All integers and doubles are little-endian. The first record is the
model configuration as JSON bytes stored one per double.
"""

import json
import struct
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from pydantic import ValidationError

from config.logging_config import get_logger
from config.settings import CHECKPOINT_CONFIG_ENTRY, CHECKPOINT_MAGIC
from models.configs import ModelConfig
from models.params import ModelParams
from services.training_service import init_params
from utils.errors import CheckpointError

logger = get_logger(__name__)

U32 = struct.Struct("<I")


def _encode_config(config: ModelConfig) -> np.ndarray:
    payload = json.dumps(config.model_dump(), sort_keys=True).encode("utf-8")
    return np.frombuffer(payload, dtype=np.uint8).astype(np.float64)


def _decode_config(values: np.ndarray) -> ModelConfig:
    if values.ndim != 1 or np.any(values != np.round(values)) or np.any((values < 0) | (values > 255)):
        raise CheckpointError(f"malformed {CHECKPOINT_CONFIG_ENTRY} entry")
    try:
        return ModelConfig(**json.loads(values.astype(np.uint8).tobytes().decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError, ValidationError, TypeError) as e:
        raise CheckpointError(f"invalid embedded model config: {e}")


def _write_entry(chunks: List[bytes], name: str, array: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    chunks.append(U32.pack(len(encoded)))
    chunks.append(encoded)
    chunks.append(U32.pack(array.ndim))
    chunks.extend(U32.pack(extent) for extent in array.shape)
    chunks.append(np.ascontiguousarray(array, dtype="<f8").tobytes())


def checkpoint_bytes(params: ModelParams, config: ModelConfig) -> bytes:
    """Serialize the config entry followed by every tensor in ``named_tensors`` order."""
    chunks = [CHECKPOINT_MAGIC]
    _write_entry(chunks, CHECKPOINT_CONFIG_ENTRY, _encode_config(config))
    for name, tensor in params.named_tensors():
        _write_entry(chunks, name, tensor.data)
    return b"".join(chunks)


class _Reader:
    """Bounds-checked cursor over checkpoint bytes."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.data)

    def take(self, count: int, what: str) -> bytes:
        end = self.pos + count
        if end > len(self.data):
            raise CheckpointError(f"truncated checkpoint while reading {what} at byte {self.pos}")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def u32(self, what: str) -> int:
        return U32.unpack(self.take(U32.size, what))[0]


def parse_checkpoint(data: bytes) -> Tuple[ModelConfig, Dict[str, np.ndarray]]:
    """
    Decode checkpoint bytes into the embedded config and a name -> array map.

    Raises:
        CheckpointError: bad magic, truncated data, duplicate names or a missing config entry
    """
    if data[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic")
    reader = _Reader(data)
    reader.pos = len(CHECKPOINT_MAGIC)

    entries: Dict[str, np.ndarray] = {}
    while not reader.exhausted:
        name_length = reader.u32("name length")
        try:
            name = reader.take(name_length, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"tensor name at byte {reader.pos - name_length} is not UTF-8")
        rank = reader.u32(f"rank of {name}")
        shape = tuple(reader.u32(f"extent of {name}") for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64))
        raw = reader.take(8 * count, f"values of {name}")
        if name in entries:
            raise CheckpointError(f"duplicate tensor {name}")
        entries[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)

    if CHECKPOINT_CONFIG_ENTRY not in entries:
        raise CheckpointError(f"checkpoint has no {CHECKPOINT_CONFIG_ENTRY} entry")
    config = _decode_config(entries.pop(CHECKPOINT_CONFIG_ENTRY))
    return config, entries


def save_checkpoint(path: Union[str, Path], params: ModelParams, config: ModelConfig) -> None:
    """Write a checkpoint; the file is replaced atomically."""
    path = Path(path)
    payload = checkpoint_bytes(params, config)
    staging = path.with_name(path.name + ".tmp")
    staging.write_bytes(payload)
    staging.replace(path)
    logger.info(f"Saved checkpoint {path} ({len(payload)} bytes)")


def load_checkpoint(path: Union[str, Path]) -> Tuple[ModelConfig, ModelParams]:
    """
    Rebuild config and parameters from a checkpoint file.

    Raises:
        CheckpointError: malformed file or a tensor whose shape does not fit the config
    """
    config, values = parse_checkpoint(Path(path).read_bytes())
    params = init_params(config, config.seed)
    params.load_values(values)
    logger.info(f"Loaded checkpoint {path}: {len(values)} tensors")
    return config, params

"""
Binary PGM (P5) / PPM (P6) codec.
Images are H x W x C tensors of integer pixel values 0-255.
"""

from pathlib import Path
from typing import Tuple, Union

import numpy as np

from config.logging_config import get_logger
from numerics.tensor import Tensor
from utils.errors import DimensionError, PnmParseError

logger = get_logger(__name__)

WHITESPACE = b" \t\n\r\x0b\x0c"
CHANNELS = {b"P5": 1, b"P6": 3}


def _read_token(data: bytes, pos: int) -> Tuple[bytes, int]:
    """Next header token after whitespace and '#' comments; returns (token, end offset)."""
    size = len(data)
    while pos < size:
        byte = data[pos:pos + 1]
        if byte == b"#":
            while pos < size and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif byte in WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < size and data[pos:pos + 1] not in WHITESPACE and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PnmParseError("truncated header", start)
    return data[start:pos], pos


def _read_int(data: bytes, pos: int, field: str) -> Tuple[int, int]:
    token, end = _read_token(data, pos)
    if not token.isdigit():
        raise PnmParseError(f"invalid {field} {token!r}", end - len(token))
    return int(token), end


def parse_pnm(data: bytes) -> Tensor:
    """
    Decode a P5/P6 byte string.

    Raises:
        PnmParseError: bad magic, maxval > 255, zero extents or truncated pixels
    """
    magic = data[:2]
    if magic not in CHANNELS:
        raise PnmParseError(f"bad magic {magic!r}; expected P5 or P6", 0)
    channels = CHANNELS[magic]
    width, pos = _read_int(data, 2, "width")
    height, pos = _read_int(data, pos, "height")
    maxval, pos = _read_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise PnmParseError(f"invalid extents {width}x{height}", pos)
    if not 1 <= maxval <= 255:
        raise PnmParseError(f"maxval {maxval} outside 1..255", pos)
    if pos >= len(data) or data[pos:pos + 1] not in WHITESPACE:
        raise PnmParseError("missing whitespace before pixel data", pos)
    pos += 1

    expected = width * height * channels
    raster = data[pos:pos + expected]
    if len(raster) < expected:
        raise PnmParseError(f"truncated pixel data: {len(raster)} of {expected} bytes", pos + len(raster))
    pixels = np.frombuffer(raster, dtype=np.uint8).astype(np.float64)
    return Tensor(pixels.reshape(height, width, channels))


def read_pnm(path: Union[str, Path]) -> Tensor:
    """Decode a PGM/PPM file."""
    image = parse_pnm(Path(path).read_bytes())
    logger.debug(f"Decoded {path}: {image.shape}")
    return image


def encode_pnm(image: Tensor) -> bytes:
    """Canonical encoding: ``P5|P6\\n<w> <h>\\n255\\n`` followed by the raster."""
    if image.data.ndim != 3 or image.shape[2] not in (1, 3):
        raise DimensionError(f"encode_pnm expects H x W x 1 or H x W x 3, got {image.shape}")
    height, width, channels = image.shape
    values = image.data
    if np.any(values < 0) or np.any(values > 255) or np.any(values != np.round(values)):
        raise ValueError("pixel values must be integers in 0..255")
    magic = b"P5" if channels == 1 else b"P6"
    header = magic + f"\n{width} {height}\n255\n".encode("ascii")
    return header + values.astype(np.uint8).tobytes()


def write_pnm(path: Union[str, Path], image: Tensor) -> None:
    Path(path).write_bytes(encode_pnm(image))

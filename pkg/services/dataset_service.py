"""
Dataset assembly: labelled image directories and the deterministic
synthetic age-image generator.
"""

from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
import pandas as pd

from config.logging_config import get_logger
from config.settings import (
    IMAGE_FILENAME_PATTERN,
    LABELS_COLUMNS,
    LABELS_FILENAME,
    LABEL_MAX,
    LABEL_MIN,
    SYNTH_AGE_MAX,
    SYNTH_AGE_MIN,
    SYNTH_ARC_LENGTH,
    SYNTH_ARC_VALUE,
    SYNTH_MAX_ARCS,
    SYNTH_NOISE,
)
from models.samples import Dataset, Sample
from numerics.tensor import Tensor
from services.image_codec import read_pnm, write_pnm
from utils.errors import ConfigError, DatasetLoadError, PnmParseError

logger = get_logger(__name__)


def load_dataset(directory: Union[str, Path], labels_csv: Union[str, Path, None] = None) -> Dataset:
    """
    Load images listed in a ``filename,age`` CSV (with header).

    Args:
        directory: folder holding the images
        labels_csv: labels file; defaults to ``<directory>/labels.csv``

    Returns:
        Dataset in CSV row order

    Raises:
        DatasetLoadError: missing file, bad age, inconsistent sizes or empty body (names the row)
    """
    directory = Path(directory)
    labels_path = Path(labels_csv) if labels_csv is not None else directory / LABELS_FILENAME
    if not labels_path.is_file():
        raise DatasetLoadError(f"labels file not found: {labels_path}")

    try:
        frame = pd.read_csv(labels_path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DatasetLoadError("empty dataset")
    if tuple(frame.columns) != LABELS_COLUMNS:
        raise DatasetLoadError(f"expected header {','.join(LABELS_COLUMNS)}, got {','.join(frame.columns)}")
    if frame.empty:
        raise DatasetLoadError("empty dataset")

    samples: List[Sample] = []
    shape = None
    # Row numbers count the header as row 1
    for row_number, (filename, age_text) in enumerate(frame.itertuples(index=False), start=2):
        try:
            age = float(age_text)
        except ValueError:
            raise DatasetLoadError(f"unparsable age {age_text!r}", row=row_number)
        if not np.isfinite(age) or not LABEL_MIN <= age <= LABEL_MAX:
            raise DatasetLoadError(f"age {age} outside [{LABEL_MIN}, {LABEL_MAX}]", row=row_number)

        image_path = directory / filename
        if not image_path.is_file():
            raise DatasetLoadError(f"missing image {filename}", row=row_number)
        try:
            image = read_pnm(image_path)
        except PnmParseError as e:
            raise DatasetLoadError(f"cannot decode {filename}: {e}", row=row_number)

        if shape is None:
            shape = image.shape
        elif image.shape != shape:
            raise DatasetLoadError(f"image {filename} has shape {image.shape}, expected {shape}", row=row_number)
        samples.append(Sample(image=image, label=age, source=filename))

    logger.info(f"Loaded {len(samples)} samples from {directory} (image shape {shape})")
    return Dataset(samples=samples, provenance="directory")


def arc_count(age: float) -> int:
    """Number of wrinkle arcs drawn for ``age``: round((age - 16) / 61 · F_max)."""
    fraction = (age - SYNTH_AGE_MIN) / (SYNTH_AGE_MAX - SYNTH_AGE_MIN)
    return int(np.floor(fraction * SYNTH_MAX_ARCS + 0.5))


def _background(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Seeded low-frequency field: a 5x5 lattice of levels, bilinearly interpolated."""
    lattice = rng.uniform(90.0, 170.0, size=(5, 5))
    ys = np.linspace(0.0, 4.0, height)
    xs = np.linspace(0.0, 4.0, width)
    y0 = np.minimum(np.floor(ys).astype(int), 3)
    x0 = np.minimum(np.floor(xs).astype(int), 3)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = lattice[y0][:, x0] * (1 - fx) + lattice[y0][:, x0 + 1] * fx
    bottom = lattice[y0 + 1][:, x0] * (1 - fx) + lattice[y0 + 1][:, x0 + 1] * fx
    return top * (1 - fy) + bottom * fy


def _arc_pixels(rng: np.random.Generator, height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    One 1-pixel-wide circular arc of fixed length at a seeded position,
    curvature and orientation, kept inside the image.
    """
    radius = rng.uniform(4.0, 12.0)
    heading = rng.uniform(0.0, 2.0 * np.pi)
    margin = SYNTH_ARC_LENGTH / 2.0 + 1.0
    mid_y = rng.uniform(margin, height - 1 - margin)
    mid_x = rng.uniform(margin, width - 1 - margin)
    # Circle center sits one radius away from the arc midpoint
    center_y = mid_y - radius * np.sin(heading)
    center_x = mid_x - radius * np.cos(heading)
    span = SYNTH_ARC_LENGTH / radius
    angles = heading + np.linspace(-span / 2.0, span / 2.0, int(4 * SYNTH_ARC_LENGTH))
    ys = np.clip(np.round(center_y + radius * np.sin(angles)).astype(int), 0, height - 1)
    xs = np.clip(np.round(center_x + radius * np.cos(angles)).astype(int), 0, width - 1)
    return ys, xs


def synth_image(rng: np.random.Generator, age: float, height: int, width: int) -> np.ndarray:
    """Grayscale H x W x 1 image: background, age-dependent dark arcs, pixel noise."""
    canvas = _background(rng, height, width)
    for _ in range(arc_count(age)):
        ys, xs = _arc_pixels(rng, height, width)
        canvas[ys, xs] = SYNTH_ARC_VALUE
    canvas = canvas + rng.uniform(-SYNTH_NOISE, SYNTH_NOISE, size=canvas.shape)
    return np.clip(np.round(canvas), 0.0, 255.0)[:, :, None]


def synth_dataset(n: int, seed: int, size: Tuple[int, int] = (32, 32)) -> Dataset:
    """
    Deterministic synthetic dataset; ages uniform in [16, 77].

    Raises:
        ConfigError: n < 1 or an image too small for the arc margin
    """
    height, width = size
    if n < 1:
        raise ConfigError("n must be >= 1")
    minimum = int(2 * (SYNTH_ARC_LENGTH / 2.0 + 1.0)) + 2
    if height < minimum or width < minimum:
        raise ConfigError(f"synthetic images must be at least {minimum}x{minimum}, got {height}x{width}")

    samples = []
    for child in np.random.SeedSequence(seed).spawn(n):
        rng = np.random.default_rng(child)
        age = float(rng.uniform(SYNTH_AGE_MIN, SYNTH_AGE_MAX))
        samples.append(Sample(image=Tensor(synth_image(rng, age, height, width)), label=age))

    logger.info(f"Generated {n} synthetic samples (seed={seed}, size={height}x{width})")
    return Dataset(samples=samples, provenance="synthetic")


def export_dataset(dataset: Dataset, directory: Union[str, Path]) -> List[Path]:
    """
    Write every sample as a PGM/PPM plus ``labels.csv`` in the same layout
    ``load_dataset`` reads.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    written = []
    for index, sample in enumerate(dataset.samples):
        filename = IMAGE_FILENAME_PATTERN.format(index=index)
        if sample.image.shape[2] == 3:
            filename = filename.replace(".pgm", ".ppm")
        write_pnm(directory / filename, sample.image)
        rows.append((filename, repr(sample.label)))
        written.append(directory / filename)
    pd.DataFrame(rows, columns=list(LABELS_COLUMNS)).to_csv(directory / LABELS_FILENAME, index=False)
    logger.info(f"Exported {len(rows)} samples to {directory}")
    return written

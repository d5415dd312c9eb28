import math
from pathlib import Path

import numpy as np
from PIL import Image

from lcnn.errors import ConfigError
from lcnn.logger import logger
from lcnn.nn.linalg import Matrix

MID_GRAY = 128


def filter_images(encoder_weights: Matrix, height: int, width: int) -> np.ndarray:
    """One uint8 image per hidden unit; each row min-max normalized to [0, 255]."""
    weights = np.asarray(encoder_weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[1] != height * width:
        raise ConfigError(
            f"Encoder rows have {weights.shape[-1]} inputs, expected {height}x{width}={height * width}"
        )
    low = weights.min(axis=1, keepdims=True)
    span = weights.max(axis=1, keepdims=True) - low
    constant = span[:, 0] == 0.0
    scaled = np.divide(weights - low, span, out=np.zeros_like(weights), where=span > 0)
    pixels = np.rint(scaled * 255.0)
    pixels[constant] = MID_GRAY
    return pixels.astype(np.uint8).reshape(-1, height, width)


def tile_filters(images: np.ndarray, padding: int = 1) -> np.ndarray:
    """Square contact sheet, ceil(sqrt(count)) tiles per side, black gutters."""
    count, height, width = images.shape
    side = math.ceil(math.sqrt(count))
    sheet = np.zeros(
        (side * height + (side - 1) * padding, side * width + (side - 1) * padding), dtype=np.uint8
    )
    for index, image in enumerate(images):
        row, col = divmod(index, side)
        top, left = row * (height + padding), col * (width + padding)
        sheet[top : top + height, left : left + width] = image
    return sheet


def export_filters(
    encoder_weights: Matrix,
    height: int,
    width: int,
    output_dir: str | Path,
    padding: int = 1,
) -> list[Path]:
    """Write filter_NNN.pgm per hidden unit plus filters_sheet.pgm; returns every written path."""
    images = filter_images(encoder_weights, height, width)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    digits = max(3, len(str(len(images))))
    paths = []
    for index, image in enumerate(images):
        path = output_dir / f"filter_{index:0{digits}d}.pgm"
        Image.fromarray(image).save(path)
        paths.append(path)
    sheet_path = output_dir / "filters_sheet.pgm"
    Image.fromarray(tile_filters(images, padding)).save(sheet_path)
    paths.append(sheet_path)
    logger.info(f"Wrote {len(images)} filters and a contact sheet to {output_dir}")
    return paths

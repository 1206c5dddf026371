"""File persistence.

This module handles JSON manifests (written atomically) and 8-bit PNG
images. Arrays in the network range [-1, 1] are mapped to [0, 255] here
and only here.
"""

import json
import logging
import os
from typing import Any

import numpy as np
from PIL import Image

from texture_refine.domain.errors import DatasetError

logger = logging.getLogger(__name__)


def to_uint8(array: np.ndarray) -> np.ndarray:
    """[-1, 1] -> [0, 255], rounding half up and clamping."""
    scaled = (np.asarray(array, dtype=np.float64) + 1.0) * 127.5
    return np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)


def from_uint8(array: np.ndarray) -> np.ndarray:
    return np.asarray(array, dtype=np.float64) / 127.5 - 1.0


def quantize(array: np.ndarray) -> np.ndarray:
    """Values a round trip through an 8-bit PNG would produce."""
    return from_uint8(to_uint8(array))


def save_json(path: str, data: Any):
    """Write JSON atomically (temp file + rename).

    Args:
        path: Destination file
        data: JSON-serializable object
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    temp_filename = f"{path}.tmp"
    with open(temp_filename, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2)
    os.replace(temp_filename, path)
    logger.debug(f"Saved {path}")


def load_json(path: str) -> Any:
    if not os.path.exists(path):
        raise DatasetError(f"Missing file: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetError(f"Invalid JSON in {path}: {e}") from e


def save_rgb(path: str, image: np.ndarray):
    """Save a (3, H, W) image in [-1, 1] as 8-bit RGB PNG."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    pixels = np.ascontiguousarray(to_uint8(np.asarray(image).transpose(1, 2, 0)))
    Image.fromarray(pixels).save(path)


def load_rgb(path: str) -> np.ndarray:
    """Load an RGB PNG as a (3, H, W) array in [-1, 1]."""
    if not os.path.exists(path):
        raise DatasetError(f"Missing image: {path}")
    with Image.open(path) as img:
        pixels = np.asarray(img.convert("RGB"))
    return from_uint8(pixels).transpose(2, 0, 1)


def save_gray(path: str, values: np.ndarray):
    """Save an (H, W) uint8 array as grayscale PNG."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Image.fromarray(np.ascontiguousarray(values, dtype=np.uint8)).save(path)


def load_gray(path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise DatasetError(f"Missing image: {path}")
    with Image.open(path) as img:
        return np.asarray(img.convert("L")).astype(np.int64)


def save_unit_gray(path: str, values: np.ndarray):
    """Save an (H, W) array in [0, 1] as grayscale PNG."""
    scaled = np.clip(np.floor(np.asarray(values, dtype=np.float64) * 255.0 + 0.5), 0, 255)
    save_gray(path, scaled.astype(np.uint8))

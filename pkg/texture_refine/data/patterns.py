"""Procedural painting of atlas regions.

All painters write in place into a (3, S, S) texture in [-1, 1] and use
coordinates local to the rectangle they paint: ``a`` runs along the
columns and ``b`` along the rows, both from 0 at the first texel.
"""

from __future__ import annotations

import math
from typing import Dict, Tuple

import numpy as np

from texture_refine.domain.models import Rect

ORIENTATIONS = ("vertical", "horizontal")


def local_coords(rect: Rect, size: int) -> Tuple[slice, slice, np.ndarray, np.ndarray]:
    rows, cols = rect.texel_slices(size)
    n_rows = rows.stop - rows.start
    n_cols = cols.stop - cols.start
    b, a = np.meshgrid(np.arange(n_rows) / n_rows, np.arange(n_cols) / n_cols, indexing="ij")
    return rows, cols, a, b


def random_color(rng: np.random.Generator, low: float = -0.85, high: float = 0.85) -> np.ndarray:
    return rng.uniform(low, high, size=3)


def paint_fill(texture: np.ndarray, rect: Rect, color: np.ndarray):
    rows, cols = rect.texel_slices(texture.shape[1])
    texture[:, rows, cols] = np.asarray(color)[:, None, None]


def paint_stripes(
    texture: np.ndarray,
    rect: Rect,
    colors: Tuple[np.ndarray, np.ndarray],
    frequency: int,
    phase: float,
    orientation: str,
):
    """Square-wave stripes with ``frequency`` full periods across the rectangle."""
    rows, cols, a, b = local_coords(rect, texture.shape[1])
    coord = a if orientation == "vertical" else b
    on = np.sin(2.0 * math.pi * frequency * coord + phase) >= 0.0
    first, second = (np.asarray(c)[:, None, None] for c in colors)
    texture[:, rows, cols] = np.where(on[None], first, second)


def paint_checker(
    texture: np.ndarray,
    rect: Rect,
    colors: Tuple[np.ndarray, np.ndarray],
    frequency: int,
    phase: float,
):
    rows, cols, a, b = local_coords(rect, texture.shape[1])
    shift = phase / (2.0 * math.pi)
    cell = (np.floor(2 * frequency * a + shift) + np.floor(2 * frequency * b + shift)) % 2 == 0
    first, second = (np.asarray(c)[:, None, None] for c in colors)
    texture[:, rows, cols] = np.where(cell[None], first, second)


def _blob(a: np.ndarray, b: np.ndarray, centre: Tuple[float, float], radii: Tuple[float, float]) -> np.ndarray:
    return ((a - centre[0]) / radii[0]) ** 2 + ((b - centre[1]) / radii[1]) ** 2 <= 1.0


def paint_face(texture: np.ndarray, rect: Rect, rng: np.random.Generator) -> Dict[str, float]:
    """Skin tone with two dark eye blobs and a mouth blob."""
    rows, cols, a, b = local_coords(rect, texture.shape[1])
    skin = np.array([rng.uniform(0.2, 0.8), rng.uniform(-0.1, 0.4), rng.uniform(-0.4, 0.1)])
    eye = rng.uniform(-0.95, -0.6, size=3)
    mouth = np.array([rng.uniform(0.3, 0.8), rng.uniform(-0.8, -0.4), rng.uniform(-0.8, -0.4)])

    eye_y = rng.uniform(0.28, 0.40)
    eye_gap = rng.uniform(0.18, 0.26)
    mouth_y = rng.uniform(0.66, 0.78)
    eye_r = (rng.uniform(0.10, 0.14), rng.uniform(0.06, 0.09))
    mouth_r = (rng.uniform(0.18, 0.26), rng.uniform(0.05, 0.08))

    region = np.broadcast_to(skin[:, None, None], (3,) + a.shape).copy()
    for centre in ((0.5 - eye_gap, eye_y), (0.5 + eye_gap, eye_y)):
        region[:, _blob(a, b, centre, eye_r)] = eye[:, None]
    region[:, _blob(a, b, (0.5, mouth_y), mouth_r)] = mouth[:, None]
    texture[:, rows, cols] = region
    return {"eye_y": eye_y, "eye_gap": eye_gap, "mouth_y": mouth_y}

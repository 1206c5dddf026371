"""Annotated images for diagnostics."""

from typing import Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw

from texture_refine.infrastructure.persistence import to_uint8

PALETTE = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
)


def clamp_positions(positions: np.ndarray, height: int, width: int) -> np.ndarray:
    """Clip (N, 2) (y, x) pixel positions into the image."""
    clipped = np.array(positions, dtype=np.float64)
    clipped[:, 0] = np.clip(clipped[:, 0], 0.0, height - 1.0)
    clipped[:, 1] = np.clip(clipped[:, 1], 0.0, width - 1.0)
    return clipped


def draw_marks(
    image: np.ndarray,
    groups: Sequence[np.ndarray],
    scale: int = 4,
    radius: float = 1.5,
) -> Tuple[Image.Image, list]:
    """Upscale a (3, H, W) [-1, 1] image and draw one colour per group of (y, x) marks.

    Returns:
        (PIL image, the clamped positions of every group in input pixels)
    """
    _, height, width = image.shape
    canvas = Image.fromarray(np.ascontiguousarray(to_uint8(image.transpose(1, 2, 0))))
    canvas = canvas.resize((width * scale, height * scale), Image.NEAREST)
    draw = ImageDraw.Draw(canvas)
    clamped = []
    for index, positions in enumerate(groups):
        color = PALETTE[index % len(PALETTE)]
        points = clamp_positions(positions, height, width)
        clamped.append(points)
        for y, x in points:
            cx, cy = (x + 0.5) * scale, (y + 0.5) * scale
            r = radius * scale / 2
            draw.ellipse((cx - r, cy - r, cx + r, cy + r), outline=color, fill=color)
    return canvas, clamped

"""Fixed-geometry rendering: posing, rasterization and texture lookup."""

from texture_refine.rendering.mannequin import ATLAS, build_mannequin, default_focal
from texture_refine.rendering.rasterizer import rasterize
from texture_refine.rendering.texturing import (
    BACKGROUND,
    atlas_foreground,
    part_map,
    render_batch,
    render_part_masks,
    render_texture,
    texel_map,
    texel_visibility,
)

__all__ = [
    "ATLAS",
    "BACKGROUND",
    "atlas_foreground",
    "build_mannequin",
    "default_focal",
    "part_map",
    "rasterize",
    "render_batch",
    "render_part_masks",
    "render_texture",
    "texel_map",
    "texel_visibility",
]

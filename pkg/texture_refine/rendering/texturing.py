"""Texture lookup R(T, m, c), part masks and texel visibility.

Rendering composites ``fg * sample(T, uv) + (1 - fg) * background``; the
foreground and UV come from a fixed RasterMap, so gradients reach the
texture only.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from texture_refine.autograd import ops
from texture_refine.autograd.tensor import Tensor, as_tensor
from texture_refine.domain.errors import ContractViolation
from texture_refine.domain.models import NUM_PARTS, Camera, Mesh, Pose, RasterMap, TexelMap
from texture_refine.nn.sampling import grid_sample_bilinear
from texture_refine.rendering.geometry import pose_vertices, project

# mid-gray in the [-1, 1] network range
BACKGROUND = 0.0
DEPTH_TOLERANCE = 0.04


def uv_flow(raster: RasterMap) -> np.ndarray:
    """Normalized sampling grid (2, H, W): x = 2u - 1, y = 2v - 1; zero off the body."""
    flow = np.zeros((2,) + raster.shape)
    flow[0] = np.where(raster.mask, 2.0 * raster.uv[..., 0] - 1.0, 0.0)
    flow[1] = np.where(raster.mask, 2.0 * raster.uv[..., 1] - 1.0, 0.0)
    return flow


def render_batch(rasters: Sequence[RasterMap], textures: Tensor, background: float = BACKGROUND) -> Tensor:
    """Render B textures (B,3,S,S) through B rasters into (B,3,H,W)."""
    textures = as_tensor(textures)
    if textures.ndim != 4 or textures.shape[1] != 3:
        raise ContractViolation(f"textures must be (B,3,S,S), got {textures.shape}")
    if len(rasters) != textures.shape[0]:
        raise ContractViolation(f"{len(rasters)} rasters for {textures.shape[0]} textures")
    shapes = {r.shape for r in rasters}
    if len(shapes) != 1:
        raise ContractViolation(f"rasters disagree in size: {sorted(shapes)}")

    flow = np.stack([uv_flow(r) for r in rasters])
    sampled = grid_sample_bilinear(textures, Tensor(flow))
    foreground = np.stack([r.mask for r in rasters]).astype(np.float64)[:, None]
    foreground = np.repeat(foreground, 3, axis=1)
    return ops.add(ops.mul(sampled, foreground), (1.0 - foreground) * background)


def render_texture(raster: RasterMap, texture: Tensor, background: float = BACKGROUND) -> Tensor:
    """Render one texture (3,S,S) into an image (3,H,W)."""
    texture = as_tensor(texture)
    if texture.ndim != 3 or texture.shape[0] != 3:
        raise ContractViolation(f"texture must be (3,S,S), got {texture.shape}")
    image = render_batch([raster], ops.reshape(texture, (1,) + texture.shape), background)
    return ops.reshape(image, image.shape[1:])


def render_part_masks(raster: RasterMap, num_parts: int = NUM_PARTS) -> np.ndarray:
    """Disjoint binary masks (P, H, W) whose union is the foreground."""
    labels = np.arange(num_parts)[:, None, None]
    return ((raster.part[None] == labels) & raster.mask[None]).astype(np.float64)


def part_map(raster: RasterMap) -> np.ndarray:
    """Label image (H, W): 0 for background, part + 1 on the body."""
    return np.where(raster.mask, raster.part + 1, 0).astype(np.int64)


def texel_map(mesh: Mesh, texture_size: int) -> TexelMap:
    """Rasterize the mesh in UV space: which surface point owns each texel.

    Texel (i, j) sits at uv = (j, i) / (S - 1). Triangles with zero UV area
    (the tube caps) own no texels.
    """
    size = texture_size
    triangle = np.full((size, size), -1, dtype=np.int64)
    barycentric = np.zeros((size, size, 3))
    uv_px = mesh.uvs * (size - 1)

    for index, (i0, i1, i2) in enumerate(mesh.triangles):
        (x0, y0), (x1, y1), (x2, y2) = uv_px[i0], uv_px[i1], uv_px[i2]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if abs(area) < 1e-10:
            continue
        col_lo = max(int(np.ceil(min(x0, x1, x2))), 0)
        col_hi = min(int(np.floor(max(x0, x1, x2))), size - 1)
        row_lo = max(int(np.ceil(min(y0, y1, y2))), 0)
        row_hi = min(int(np.floor(max(y0, y1, y2))), size - 1)
        if col_lo > col_hi or row_lo > row_hi:
            continue
        rows, cols = np.mgrid[row_lo:row_hi + 1, col_lo:col_hi + 1]
        w0 = ((x1 - cols) * (y2 - rows) - (x2 - cols) * (y1 - rows)) / area
        w1 = ((x2 - cols) * (y0 - rows) - (x0 - cols) * (y2 - rows)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= -1e-9) & (w1 >= -1e-9) & (w2 >= -1e-9) & (triangle[rows, cols] < 0)
        r, c = rows[inside], cols[inside]
        triangle[r, c] = index
        barycentric[r, c] = np.clip(np.stack([w0[inside], w1[inside], w2[inside]], axis=1), 0.0, 1.0)

    return TexelMap(triangle=triangle, barycentric=barycentric)


def atlas_foreground(mesh: Mesh, texture_size: int) -> np.ndarray:
    """Texels that belong to some surface point of the mesh."""
    return texel_map(mesh, texture_size).mapped


def texel_visibility(
    mesh: Mesh,
    pose: Pose,
    camera: Camera,
    raster: RasterMap,
    texels: TexelMap,
    tolerance: float = DEPTH_TOLERANCE,
) -> np.ndarray:
    """(S, S) boolean map of texels whose surface point is seen from ``camera``.

    A texel is visible when its posed surface point projects onto a covered
    pixel whose z-buffer depth agrees within ``tolerance`` meters.
    """
    visible = np.zeros(texels.triangle.shape, dtype=bool)
    rows, cols = np.nonzero(texels.mapped)
    if rows.size == 0:
        return visible

    posed = pose_vertices(mesh, pose)
    corners = posed[mesh.triangles[texels.triangle[rows, cols]]]          # (N, 3, 3)
    points = np.einsum("nk,nkd->nd", texels.barycentric[rows, cols], corners)
    screen, depth = project(points, camera)

    height, width = raster.shape
    with np.errstate(invalid="ignore"):
        pc = np.floor(screen[:, 0])
        pr = np.floor(screen[:, 1])
        on_screen = np.isfinite(pc) & np.isfinite(pr) & (pc >= 0) & (pc < width) & (pr >= 0) & (pr < height)
    pc = np.where(on_screen, pc, 0).astype(np.int64)
    pr = np.where(on_screen, pr, 0).astype(np.int64)

    seen = on_screen & raster.mask[pr, pc] & (np.abs(raster.depth[pr, pc] - depth) <= tolerance)
    visible[rows[seen], cols[seen]] = True
    return visible

"""Z-buffered perspective rasterization of a posed mesh.

Visibility is hard and carries no gradient; the texture lookup in
``texturing`` is the only differentiable step of rendering.
"""

from __future__ import annotations

import logging

import numpy as np

from texture_refine.domain.models import Camera, Mesh, Pose, RasterMap
from texture_refine.rendering.geometry import NEAR, pose_vertices, project, validate_mesh

logger = logging.getLogger(__name__)

AREA_EPS = 1e-10


def empty_raster(height: int, width: int) -> RasterMap:
    return RasterMap(
        triangle=np.full((height, width), -1, dtype=np.int64),
        barycentric=np.zeros((height, width, 3)),
        uv=np.zeros((height, width, 2)),
        part=np.full((height, width), -1, dtype=np.int64),
        mask=np.zeros((height, width), dtype=bool),
        depth=np.full((height, width), np.inf),
    )


def rasterize(mesh: Mesh, pose: Pose, camera: Camera) -> RasterMap:
    """Rasterize ``mesh`` posed by ``pose`` as seen from ``camera``.

    Barycentrics are perspective-correct; on ties in depth the earlier
    triangle keeps the pixel. Triangles with a vertex closer than the near
    plane, or with zero screen area, are skipped.
    """
    validate_mesh(mesh)
    height, width = camera.height, camera.width
    raster = empty_raster(height, width)
    screen, depth = project(pose_vertices(mesh, pose), camera)

    skipped = 0
    for index, (i0, i1, i2) in enumerate(mesh.triangles):
        z = depth[[i0, i1, i2]]
        if np.any(z <= NEAR):
            continue
        (x0, y0), (x1, y1), (x2, y2) = screen[i0], screen[i1], screen[i2]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if abs(area) < AREA_EPS:
            skipped += 1
            continue

        col_lo = max(int(np.floor(min(x0, x1, x2) - 0.5)), 0)
        col_hi = min(int(np.ceil(max(x0, x1, x2) - 0.5)), width - 1)
        row_lo = max(int(np.floor(min(y0, y1, y2) - 0.5)), 0)
        row_hi = min(int(np.ceil(max(y0, y1, y2) - 0.5)), height - 1)
        if col_lo > col_hi or row_lo > row_hi:
            continue

        rows, cols = np.mgrid[row_lo:row_hi + 1, col_lo:col_hi + 1]
        px = cols + 0.5
        py = rows + 0.5
        w0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) / area
        w1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue

        screen_bary = np.stack([w0[inside], w1[inside], w2[inside]], axis=1)
        persp = screen_bary / z[None, :]
        inv_depth = persp.sum(axis=1)
        pixel_depth = 1.0 / inv_depth
        bary = persp / inv_depth[:, None]

        r, c = rows[inside], cols[inside]
        closer = pixel_depth < raster.depth[r, c]
        if not closer.any():
            continue
        r, c, bary = r[closer], c[closer], bary[closer]
        raster.depth[r, c] = pixel_depth[closer]
        raster.triangle[r, c] = index
        raster.barycentric[r, c] = bary
        raster.uv[r, c] = bary @ mesh.uvs[[i0, i1, i2]]
        raster.part[r, c] = mesh.triangle_parts[index]
        raster.mask[r, c] = True

    if skipped:
        logger.debug(f"Skipped {skipped} degenerate triangles")
    return raster

"""Six-part capsule mannequin with a fixed UV atlas.

Every part is an elliptical tube unrolled into its own atlas rectangle
(u around the tube, v from top to bottom) and closed by two caps whose UVs
collapse onto the tube's boundary rows, so caps take the edge colour and
own no texels. The front of every tube (facing +z) sits at the middle of
its rectangle, which is where the face rectangle lies for the head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from texture_refine.domain.models import AtlasLayout, Mesh, Part, Rect

Vec3 = Tuple[float, float, float]

# vertical centre of the body, so a look-at-origin camera frames it
BODY_CENTER_Y = 0.025
MARGIN_TEXELS = 1.5


@dataclass(frozen=True)
class TubeSpec:
    part: Part
    top: Vec3
    bottom: Vec3
    radius: float
    rings: int
    segments: int
    depth_scale: float = 1.0
    taper: float = 1.0


ATLAS = AtlasLayout(
    parts={
        Part.TORSO: Rect(0.0, 0.0, 0.5, 0.5),
        Part.HEAD: Rect(0.5, 0.0, 1.0, 0.5),
        Part.LEFT_ARM: Rect(0.0, 0.5, 0.25, 1.0),
        Part.RIGHT_ARM: Rect(0.25, 0.5, 0.5, 1.0),
        Part.LEFT_LEG: Rect(0.5, 0.5, 0.75, 1.0),
        Part.RIGHT_LEG: Rect(0.75, 0.5, 1.0, 1.0),
    },
    face=Rect(0.675, 0.125, 0.825, 0.375),
)

TUBES = (
    TubeSpec(Part.TORSO, (0.0, 0.60, 0.0), (0.0, 0.0, 0.0), 0.17, rings=7, segments=12, depth_scale=0.6),
    TubeSpec(Part.HEAD, (0.0, 0.90, 0.0), (0.0, 0.64, 0.0), 0.10, rings=5, segments=10),
    TubeSpec(Part.LEFT_ARM, (0.27, 0.58, 0.0), (0.27, 0.0, 0.0), 0.05, rings=5, segments=8, taper=0.8),
    TubeSpec(Part.RIGHT_ARM, (-0.27, 0.58, 0.0), (-0.27, 0.0, 0.0), 0.05, rings=5, segments=8, taper=0.8),
    TubeSpec(Part.LEFT_LEG, (0.09, -0.005, 0.0), (0.09, -0.85, 0.0), 0.07, rings=5, segments=8, taper=0.75),
    TubeSpec(Part.RIGHT_LEG, (-0.09, -0.005, 0.0), (-0.09, -0.85, 0.0), 0.07, rings=5, segments=8, taper=0.75),
)

# rotation pivots: limbs swing about x at shoulder/hip, the head turns about y
PIVOTS: Dict[Part, Tuple[Vec3, Vec3]] = {
    Part.HEAD: ((0.0, 0.62, 0.0), (0.0, 1.0, 0.0)),
    Part.LEFT_ARM: ((0.27, 0.58, 0.0), (1.0, 0.0, 0.0)),
    Part.RIGHT_ARM: ((-0.27, 0.58, 0.0), (1.0, 0.0, 0.0)),
    Part.LEFT_LEG: ((0.09, 0.0, 0.0), (1.0, 0.0, 0.0)),
    Part.RIGHT_LEG: ((-0.09, 0.0, 0.0), (1.0, 0.0, 0.0)),
}

LIMBS = (Part.LEFT_ARM, Part.RIGHT_ARM, Part.LEFT_LEG, Part.RIGHT_LEG)


def _tube(spec: TubeSpec, rect: Rect, margin: float):
    top = np.asarray(spec.top, dtype=np.float64)
    bottom = np.asarray(spec.bottom, dtype=np.float64)
    width = rect.u1 - rect.u0 - 2 * margin
    height = rect.v1 - rect.v0 - 2 * margin
    stride = spec.segments + 1

    vertices: List[np.ndarray] = []
    uvs: List[Tuple[float, float]] = []
    for r in range(spec.rings):
        t = r / (spec.rings - 1)
        centre = top + t * (bottom - top)
        radius = spec.radius * (1.0 + (spec.taper - 1.0) * t)
        for s in range(stride):
            a = s / spec.segments
            theta = 2.0 * math.pi * a - math.pi
            offset = np.array([radius * math.sin(theta), 0.0, radius * spec.depth_scale * math.cos(theta)])
            vertices.append(centre + offset)
            uvs.append((rect.u0 + margin + a * width, rect.v0 + margin + t * height))

    triangles: List[Tuple[int, int, int]] = []
    for r in range(spec.rings - 1):
        for s in range(spec.segments):
            a, b = r * stride + s, r * stride + s + 1
            c, d = a + stride, b + stride
            triangles.append((a, c, b))
            triangles.append((b, c, d))

    for r, centre in ((0, top), (spec.rings - 1, bottom)):
        for s in range(spec.segments):
            a, b = r * stride + s, r * stride + s + 1
            vertices.append(centre.copy())
            uvs.append(((uvs[a][0] + uvs[b][0]) / 2, (uvs[a][1] + uvs[b][1]) / 2))
            triangles.append((len(vertices) - 1, a, b))

    return np.array(vertices), np.array(uvs), np.array(triangles, dtype=np.int64)


def build_mannequin(texture_size: int = 128) -> Tuple[Mesh, AtlasLayout]:
    """The mannequin mesh (about 600 triangles) and its atlas layout."""
    margin = MARGIN_TEXELS / (texture_size - 1)
    vertices, uvs, triangles, triangle_parts, vertex_parts = [], [], [], [], []
    base = 0
    for spec in TUBES:
        v, uv, tri = _tube(spec, ATLAS.parts[spec.part], margin)
        vertices.append(v)
        uvs.append(uv)
        triangles.append(tri + base)
        triangle_parts.append(np.full(len(tri), spec.part.value))
        vertex_parts.append(np.full(len(v), spec.part.value))
        base += len(v)

    shift = np.array([0.0, BODY_CENTER_Y, 0.0])
    mesh = Mesh(
        vertices=np.concatenate(vertices) - shift,
        triangles=np.concatenate(triangles),
        uvs=np.clip(np.concatenate(uvs), 0.0, 1.0),
        triangle_parts=np.concatenate(triangle_parts),
        vertex_parts=np.concatenate(vertex_parts),
        pivots={
            part.key: (tuple(float(x) for x in np.asarray(point) - shift), axis)
            for part, (point, axis) in PIVOTS.items()
        },
    )
    return mesh, ATLAS


def default_focal(image_height: int, distance: float) -> float:
    """Focal length (pixels) that frames the 1.75 m body in ~85% of the image height."""
    return 0.85 * image_height * distance / 1.75

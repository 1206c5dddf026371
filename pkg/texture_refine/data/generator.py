"""Procedural mannequin identities.

An identity is a painted atlas texture on the fixed mannequin, observed
from K cameras spread evenly in azimuth. Everything is a pure function of
the seed, and all pixel values are snapped to the 8-bit grid so that the
files written to disk hold exactly what was generated.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np

from texture_refine.autograd.tensor import Tensor
from texture_refine.data import patterns
from texture_refine.domain.errors import ContractViolation
from texture_refine.domain.models import (
    AtlasLayout,
    Camera,
    FaceBank,
    Part,
    Pose,
    SyntheticIdentity,
    View,
)
from texture_refine.infrastructure.persistence import quantize
from texture_refine.rendering.mannequin import LIMBS, build_mannequin, default_focal
from texture_refine.rendering.rasterizer import rasterize
from texture_refine.rendering.texturing import part_map, render_texture

logger = logging.getLogger(__name__)

# identity seeds stay below this; face bank seeds start at it
FACE_SEED_BASE = 1_000_000
MAX_FACES_PER_SEED = 100

ELEVATION_JITTER = math.radians(10.0)
LIMB_JITTER = math.radians(20.0)
PATTERN_KINDS = ("stripes", "checker", "fill")


@dataclass(frozen=True)
class GeneratorSettings:
    num_views: int = 8
    image_height: int = 128
    image_width: int = 64
    texture_size: int = 128
    distance: float = 3.0


def paint_texture(rng: np.random.Generator, layout: AtlasLayout, size: int) -> Tuple[np.ndarray, Dict[str, Dict[str, Any]]]:
    """Paint every part rectangle and the face; returns the texture and what was painted.

    The torso always carries stripes; the other parts draw their pattern kind.
    """
    texture = np.zeros((3, size, size))
    painted: Dict[str, Dict[str, Any]] = {}
    for part in Part:
        rect = layout.parts[part]
        colors = (patterns.random_color(rng), patterns.random_color(rng))
        kind = "stripes" if part is Part.TORSO else str(rng.choice(PATTERN_KINDS))
        frequency = int(rng.integers(2, 7))
        phase = float(rng.uniform(0.0, 2.0 * math.pi))
        orientation = str(rng.choice(patterns.ORIENTATIONS))

        if part is Part.HEAD or kind == "fill":
            patterns.paint_fill(texture, rect, colors[0])
            painted[part.key] = {"kind": "fill"}
        elif kind == "stripes":
            patterns.paint_stripes(texture, rect, colors, frequency, phase, orientation)
            painted[part.key] = {"kind": kind, "frequency": frequency, "phase": phase, "orientation": orientation}
        else:
            patterns.paint_checker(texture, rect, colors, frequency, phase)
            painted[part.key] = {"kind": kind, "frequency": frequency, "phase": phase}

    painted["face"] = dict(patterns.paint_face(texture, layout.face, rng), kind="face")
    return quantize(texture), painted


def sample_views(rng: np.random.Generator, settings: GeneratorSettings) -> List[Tuple[Pose, Camera]]:
    """K cameras at azimuths 2*pi*k/K with jittered elevation and limb angles."""
    focal = default_focal(settings.image_height, settings.distance)
    views = []
    for k in range(settings.num_views):
        camera = Camera(
            azimuth=2.0 * math.pi * k / settings.num_views,
            elevation=float(rng.uniform(-ELEVATION_JITTER, ELEVATION_JITTER)),
            distance=settings.distance,
            focal=focal,
            height=settings.image_height,
            width=settings.image_width,
        )
        pose = Pose(angles={part.key: float(rng.uniform(-LIMB_JITTER, LIMB_JITTER)) for part in LIMBS})
        views.append((pose, camera))
    return views


def generate_identity(seed: int, settings: GeneratorSettings = GeneratorSettings(), identity_id: str = "") -> SyntheticIdentity:
    """Deterministic identity: same seed, same bytes."""
    if settings.num_views < 2:
        raise ContractViolation(f"an identity needs at least 2 views, got {settings.num_views}")
    rng = np.random.default_rng(seed)
    mesh, layout = build_mannequin(settings.texture_size)
    texture, painted = paint_texture(rng, layout, settings.texture_size)

    views = []
    for k, (pose, camera) in enumerate(sample_views(rng, settings)):
        raster = rasterize(mesh, pose, camera)
        image = quantize(render_texture(raster, Tensor(texture)).data)
        views.append(View(view_id=k, pose=pose, camera=camera, image=image, parts=part_map(raster)))

    logger.debug(f"Generated identity seed={seed} with {len(views)} views")
    return SyntheticIdentity(
        identity_id=identity_id or f"seed_{seed}",
        seed=seed,
        texture=texture,
        mesh=mesh,
        views=views,
        patterns=painted,
    )


def face_seed(seed: int, index: int) -> int:
    return FACE_SEED_BASE + seed * MAX_FACES_PER_SEED + index


def face_bank(seed: int, count: int, texture_size: int = 128) -> FaceBank:
    """``count`` painted textures from the reserved seed range, with the atlas face mask."""
    if not 1 <= count <= MAX_FACES_PER_SEED:
        raise ContractViolation(f"face bank size must be in [1, {MAX_FACES_PER_SEED}], got {count}")
    if seed < 0:
        raise ContractViolation(f"face bank seed must be non-negative, got {seed}")
    _, layout = build_mannequin(texture_size)
    textures = [
        paint_texture(np.random.default_rng(face_seed(seed, i)), layout, texture_size)[0]
        for i in range(count)
    ]
    return FaceBank(textures=textures, face_mask=layout.face_mask(texture_size))

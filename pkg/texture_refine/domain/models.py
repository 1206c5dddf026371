"""Data models shared across the package.

Geometry, rendering intermediates, network outputs, dataset units and
evaluation reports. Arrays are numpy; differentiable values are Tensors.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from texture_refine.autograd.tensor import Tensor


class Part(Enum):
    """Body parts of the mannequin; value is the raster label."""
    TORSO = 0
    HEAD = 1
    LEFT_ARM = 2
    RIGHT_ARM = 3
    LEFT_LEG = 4
    RIGHT_LEG = 5

    @property
    def key(self) -> str:
        return self.name.lower()


NUM_PARTS = len(Part)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in normalized UV space, u along columns, v along rows."""
    u0: float
    v0: float
    u1: float
    v1: float

    def contains(self, other: "Rect") -> bool:
        return (self.u0 <= other.u0 and self.v0 <= other.v0
                and other.u1 <= self.u1 and other.v1 <= self.v1)

    def overlaps(self, other: "Rect") -> bool:
        return not (self.u1 <= other.u0 or other.u1 <= self.u0
                    or self.v1 <= other.v0 or other.v1 <= self.v0)

    def texel_slices(self, size: int) -> Tuple[slice, slice]:
        """(rows, cols) slices of the texels whose centres fall inside.

        Texel j sits at normalized coordinate j / (size - 1); the rectangle
        is half-open except on the far edge of the atlas.
        """
        def span(lo: float, hi: float) -> slice:
            start = int(np.ceil(lo * (size - 1) - 1e-9))
            stop = size if hi >= 1.0 else int(np.ceil(hi * (size - 1) - 1e-9))
            return slice(start, stop)

        return span(self.v0, self.v1), span(self.u0, self.u1)


@dataclass
class AtlasLayout:
    """Fixed placement of every part (and the face) in the UV square."""
    parts: Dict[Part, Rect]
    face: Rect

    def face_mask(self, size: int) -> np.ndarray:
        mask = np.zeros((size, size))
        rows, cols = self.face.texel_slices(size)
        mask[rows, cols] = 1.0
        return mask

    def part_mask(self, part: Part, size: int) -> np.ndarray:
        mask = np.zeros((size, size), dtype=bool)
        rows, cols = self.parts[part].texel_slices(size)
        mask[rows, cols] = True
        return mask


@dataclass
class Mesh:
    """Triangle mesh with a UV atlas and per-part articulation pivots.

    Vertices are not shared between parts, so ``vertex_parts`` says which
    rigid part moves each vertex.
    """
    vertices: np.ndarray          # (N, 3) meters
    triangles: np.ndarray         # (M, 3) vertex indices
    uvs: np.ndarray               # (N, 2) in [0, 1]
    triangle_parts: np.ndarray    # (M,) part label
    vertex_parts: np.ndarray      # (N,) part label
    pivots: Dict[str, Tuple[Tuple[float, float, float], Tuple[float, float, float]]] = field(
        default_factory=dict
    )  # part key -> (pivot point, rotation axis)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.uvs = np.asarray(self.uvs, dtype=np.float64)
        self.triangle_parts = np.asarray(self.triangle_parts, dtype=np.int64)
        self.vertex_parts = np.asarray(self.vertex_parts, dtype=np.int64)

    @property
    def num_triangles(self) -> int:
        return int(self.triangles.shape[0])


@dataclass
class Pose:
    """Articulation parameters m: rotation angle (radians) per part key."""
    angles: Dict[str, float] = field(default_factory=dict)


@dataclass
class Camera:
    """Pinhole camera looking at ``target``; symbol c."""
    azimuth: float
    elevation: float
    distance: float
    focal: float
    height: int = 128
    width: int = 64
    target: Tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass
class RasterMap:
    """Per-pixel visibility result of rasterizing a posed mesh."""
    triangle: np.ndarray      # (H, W) int, -1 where empty
    barycentric: np.ndarray   # (H, W, 3)
    uv: np.ndarray            # (H, W, 2)
    part: np.ndarray          # (H, W) int, -1 where empty
    mask: np.ndarray          # (H, W) bool
    depth: np.ndarray         # (H, W) inf where empty

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape


@dataclass
class TexelMap:
    """Surface point behind every texel: triangle (-1 if unmapped) and barycentrics."""
    triangle: np.ndarray      # (S, S) int
    barycentric: np.ndarray   # (S, S, 3)

    @property
    def mapped(self) -> np.ndarray:
        return self.triangle >= 0


@dataclass
class TextureOutput:
    """Network predictions over the UV grid plus the fused texture.

    rgb: (B,3,S,S) tanh; flow: (B,2,S,S) tanh; mask: (B,1,S,S) sigmoid;
    texture = mask * sample(image, flow) + (1 - mask) * rgb.
    """
    rgb: Tensor
    flow: Tensor
    mask: Tensor
    texture: Tensor
    sampled: Optional[Tensor] = None
    offsets: Optional[np.ndarray] = None


@dataclass
class View:
    """One calibrated observation of an identity."""
    view_id: int
    pose: Pose
    camera: Camera
    image: np.ndarray          # (3, H, W) in [-1, 1]
    parts: np.ndarray          # (H, W) int, 0 = background, 1..P = part + 1


@dataclass
class SyntheticIdentity:
    identity_id: str
    seed: int
    texture: np.ndarray        # (3, S, S) in [-1, 1]
    mesh: Mesh
    views: List[View]
    patterns: Dict[str, Dict[str, Any]] = field(default_factory=dict)


@dataclass
class FaceBank:
    """Reference face textures and the fixed face mask on the atlas."""
    textures: List[np.ndarray]     # each (3, S, S)
    face_mask: np.ndarray          # (S, S) binary

    def __len__(self) -> int:
        return len(self.textures)


@dataclass
class MetricReport:
    """Split-level means of the SV/NV metrics."""
    split: str
    ssim_sv: float
    ssim_nv: float
    psnr_sv: float
    psnr_nv: float
    cossim_sv: float
    cossim_nv: float
    pdist_sv: float
    pdist_nv: float
    inv_mse: float
    num_inputs: int
    num_novel: int
    fingerprint: str = ""
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def summary(self) -> Dict[str, float]:
        return {
            "ssim_sv": self.ssim_sv, "ssim_nv": self.ssim_nv,
            "psnr_sv": self.psnr_sv, "psnr_nv": self.psnr_nv,
            "cossim_sv": self.cossim_sv, "cossim_nv": self.cossim_nv,
            "pdist_sv": self.pdist_sv, "pdist_nv": self.pdist_nv,
            "inv_mse": self.inv_mse,
        }

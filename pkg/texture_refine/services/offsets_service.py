"""
Offsets Service Module

Shows where the first deformable layer samples the input image for a few
marked texels: for each UV point, the nine tap positions (base grid plus
learned offsets) are drawn onto the input view.
"""

import logging
import os
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from texture_refine.domain.errors import ContractViolation
from texture_refine.infrastructure.persistence import save_json
from texture_refine.model.refinement import DeformableRefinement
from texture_refine.nn.deformable import sampling_positions
from texture_refine.presentation.drawing import draw_marks
from texture_refine.services.inference_service import InferenceService, load_input
from texture_refine.services.model_service import ModelBundle

UVPoint = Tuple[float, float]


def parse_uv_points(text: str) -> List[UVPoint]:
    """``"u,v;u,v"`` -> [(u, v), ...], each coordinate in [0, 1]."""
    points = []
    for item in filter(None, (p.strip() for p in text.split(";"))):
        try:
            u, v = (float(x) for x in item.split(","))
        except ValueError as e:
            raise ContractViolation(f"UV point '{item}' is not of the form u,v") from e
        if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
            raise ContractViolation(f"UV point ({u}, {v}) outside [0, 1]")
        points.append((u, v))
    if not points:
        raise ContractViolation("no UV points given")
    return points


def uv_to_texel(point: UVPoint, size: int) -> Tuple[int, int]:
    """(u, v) -> (row, col) of the nearest texel."""
    u, v = point
    return int(round(v * (size - 1))), int(round(u * (size - 1)))


@dataclass
class OffsetMarks:
    uv: UVPoint
    texel: Tuple[int, int]
    positions: np.ndarray      # (9, 2) (y, x) input pixels, clamped for display

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)


class OffsetsService:
    """Visualizes deformable sampling positions of a trained bundle."""

    def __init__(self, bundle: ModelBundle):
        if not isinstance(bundle.estimator.refinement, DeformableRefinement):
            raise ContractViolation("offset visualization needs a deformable refinement module")
        self.bundle = bundle
        self.inference = InferenceService(bundle)
        self.logger = logging.getLogger(__name__)

    def marks(self, view_dir: str, uv_points: Sequence[UVPoint]):
        view, _ = load_input(view_dir)
        self.inference.predict(view)
        offsets = self.bundle.estimator.refinement.last_offsets
        size = offsets.shape[2]
        positions = sampling_positions(offsets, view.image.shape[1:])[0]   # (9, 2, S, S)
        result = []
        for point in uv_points:
            row, col = uv_to_texel(point, size)
            result.append(OffsetMarks(uv=point, texel=(row, col), positions=positions[:, :, row, col]))
        return view, result

    def run(self, view_dir: str, uv_points: Sequence[UVPoint], out_path: str) -> List[OffsetMarks]:
        """Write the annotated image to ``out_path`` and the positions next to it as JSON."""
        view, marks = self.marks(view_dir, uv_points)
        canvas, clamped = draw_marks(view.image, [m.positions for m in marks])
        for mark, points in zip(marks, clamped):
            mark.positions = points
        os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
        canvas.save(out_path)
        save_json(os.path.splitext(out_path)[0] + ".json", {
            "fingerprint": self.bundle.fingerprint,
            "view": view_dir,
            "points": [
                {"uv": list(m.uv), "texel": list(m.texel), "positions_yx": m.positions.tolist()}
                for m in marks
            ],
        })
        self.logger.info(f"Drew {len(marks)} offset groups onto {out_path}")
        return marks

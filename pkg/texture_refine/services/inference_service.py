"""
Inference Service Module

Estimates the texture of a single stored view and writes the texture, the
same-view render, a turntable of novel-view renders and the fusion mask.
"""

import logging
import math
import os
from dataclasses import dataclass, replace
from typing import List

import numpy as np

from texture_refine.autograd.tensor import Tensor
from texture_refine.data.dataset import load_mesh, load_view, network_parts
from texture_refine.domain.errors import DatasetError
from texture_refine.domain.models import Mesh, View
from texture_refine.infrastructure.persistence import quantize, save_rgb, save_unit_gray
from texture_refine.rendering.rasterizer import rasterize
from texture_refine.rendering.texturing import render_texture
from texture_refine.services.model_service import ModelBundle

TURNTABLE_VIEWS = 8


@dataclass
class InferenceResult:
    texture: np.ndarray
    mask: np.ndarray
    paths: List[str]


def identity_dir_of(view_dir: str) -> str:
    """``<id>/views/<k>`` -> ``<id>``."""
    return os.path.dirname(os.path.dirname(os.path.normpath(view_dir)))


def load_input(view_dir: str):
    if not os.path.isdir(view_dir):
        raise DatasetError(f"View directory not found: {view_dir}")
    return load_view(view_dir), load_mesh(identity_dir_of(view_dir))


class InferenceService:
    """Runs one bundle on single views."""

    def __init__(self, bundle: ModelBundle):
        self.bundle = bundle
        self.logger = logging.getLogger(__name__)

    def predict(self, view: View):
        """Final TextureOutput for one view, eval mode."""
        self.bundle.train(False)
        final, _ = self.bundle.estimator(Tensor(view.image[None]), Tensor(network_parts(view.parts[None])))
        return final

    def turntable(self, mesh: Mesh, view: View, texture: np.ndarray) -> List[np.ndarray]:
        """Renders at evenly spaced azimuths with the input pose, level camera."""
        renders = []
        for k in range(TURNTABLE_VIEWS):
            camera = replace(view.camera, azimuth=2.0 * math.pi * k / TURNTABLE_VIEWS, elevation=0.0)
            renders.append(render_texture(rasterize(mesh, view.pose, camera), Tensor(texture)).data)
        return renders

    def run(self, view_dir: str, out_dir: str) -> InferenceResult:
        """Write ``texture.png``, ``sv.png``, ``nv_0..7.png`` and ``mask.png`` (11 files)."""
        view, mesh = load_input(view_dir)
        output = self.predict(view)
        # renders use the 8-bit texture so texture.png re-renders to sv.png exactly
        texture = quantize(output.texture.data[0])
        mask = output.mask.data[0, 0]

        os.makedirs(out_dir, exist_ok=True)
        paths = [os.path.join(out_dir, "texture.png"), os.path.join(out_dir, "sv.png")]
        save_rgb(paths[0], texture)
        save_rgb(paths[1], render_texture(rasterize(mesh, view.pose, view.camera), Tensor(texture)).data)
        for k, render in enumerate(self.turntable(mesh, view, texture)):
            path = os.path.join(out_dir, f"nv_{k}.png")
            save_rgb(path, render)
            paths.append(path)
        mask_path = os.path.join(out_dir, "mask.png")
        save_unit_gray(mask_path, mask)
        paths.append(mask_path)

        self.logger.info(f"Wrote {len(paths)} images for {view_dir} to {out_dir}")
        return InferenceResult(texture=texture, mask=mask, paths=paths)

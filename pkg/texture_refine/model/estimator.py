"""Texture estimator: backbone, optional refinement and mask fusion."""

from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np

from texture_refine.autograd import ops
from texture_refine.autograd.tensor import Tensor, as_tensor
from texture_refine.domain.errors import ContractViolation
from texture_refine.domain.models import TextureOutput
from texture_refine.model.backbone import AttentionBackbone, split_head
from texture_refine.model.refinement import ConvRefinement, DeformableRefinement
from texture_refine.nn.layers import Module, count_parameters
from texture_refine.nn.sampling import grid_sample_bilinear

REFINE_MODES = ("deformable", "conv")


def mask_fusion(rgb: Tensor, flow: Tensor, mask: Tensor, image: Tensor) -> Tuple[Tensor, Tensor]:
    """T = M * sample(I, F) + (1 - M) * T_RGB. Returns (T, sampled)."""
    rgb, flow, mask, image = as_tensor(rgb), as_tensor(flow), as_tensor(mask), as_tensor(image)
    b, _, s, t = rgb.shape
    if flow.shape != (b, 2, s, t) or mask.shape != (b, 1, s, t):
        raise ContractViolation(
            f"fusion shapes disagree: rgb {rgb.shape}, flow {flow.shape}, mask {mask.shape}"
        )
    if image.ndim != 4 or image.shape[:2] != (b, 3):
        raise ContractViolation(f"fusion image must be (B,3,H,W), got {image.shape}")
    sampled = grid_sample_bilinear(image, flow)
    m = ops.expand_channels(mask, 3)
    texture = ops.add(ops.mul(m, sampled), ops.mul(ops.sub(1.0, m), rgb))
    return texture, sampled


def _output(raw: Tensor, image: Tensor, offsets: Optional[np.ndarray] = None) -> TextureOutput:
    flow, rgb, mask = split_head(raw)
    texture, sampled = mask_fusion(rgb, flow, mask, image)
    return TextureOutput(rgb=rgb, flow=flow, mask=mask, texture=texture, sampled=sampled, offsets=offsets)


class TextureEstimator(Module):
    """I, parts -> (final TextureOutput, intermediate TextureOutput).

    Without a refinement module the final output is the intermediate one.
    """

    def __init__(
        self,
        width: int,
        texture_size: int,
        rng: np.random.Generator,
        use_refine: bool = True,
        refine_mode: str = "deformable",
    ):
        super().__init__()
        self.logger = logging.getLogger(__name__)
        if refine_mode not in REFINE_MODES:
            raise ContractViolation(f"refine_mode must be one of {REFINE_MODES}, got '{refine_mode}'")
        self.backbone = AttentionBackbone(width, texture_size, rng)
        self.refinement = None
        if use_refine:
            cls = DeformableRefinement if refine_mode == "deformable" else ConvRefinement
            self.refinement = cls(width, rng)
        self.logger.debug(
            f"Built estimator width={width} refine={refine_mode if use_refine else 'none'} "
            f"params={self.num_parameters()}"
        )

    def forward(self, image: Tensor, parts: Tensor) -> Tuple[TextureOutput, TextureOutput]:
        image, parts = as_tensor(image), as_tensor(parts)
        raw, _ = self.backbone(image, parts)
        intermediate = _output(raw, image)
        if self.refinement is None:
            return intermediate, intermediate

        predictions = ops.concat([intermediate.flow, intermediate.rgb, intermediate.mask], axis=1)
        refined = self.refinement(ops.concat([image, parts], axis=1), intermediate.flow, predictions)
        offsets = getattr(self.refinement, "last_offsets", None)
        return _output(refined, image, offsets), intermediate


def estimate_texture(model: TextureEstimator, image: Tensor, parts: Tensor) -> Tuple[TextureOutput, TextureOutput]:
    return model(image, parts)


def model_parameter_count(model: TextureEstimator) -> int:
    return count_parameters(model.backbone) + count_parameters(model.refinement)

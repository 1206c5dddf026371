"""Texture estimation network and the confidence network."""

from texture_refine.model.backbone import AttentionBackbone, query_encoding, split_head
from texture_refine.model.confidence import SIGMA_FLOOR, ConfidenceNet
from texture_refine.model.estimator import (
    REFINE_MODES,
    TextureEstimator,
    estimate_texture,
    mask_fusion,
    model_parameter_count,
)
from texture_refine.model.refinement import ConvRefinement, DeformableRefinement, kernel_shape

__all__ = [
    "AttentionBackbone",
    "ConfidenceNet",
    "ConvRefinement",
    "DeformableRefinement",
    "REFINE_MODES",
    "SIGMA_FLOOR",
    "TextureEstimator",
    "estimate_texture",
    "kernel_shape",
    "mask_fusion",
    "model_parameter_count",
    "query_encoding",
    "split_head",
]

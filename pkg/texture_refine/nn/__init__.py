"""Differentiable building blocks: convolution, sampling, deformable convolution, attention."""

from texture_refine.nn.attention import attention_block
from texture_refine.nn.deformable import deformable_conv2d, flow_to_offsets
from texture_refine.nn.functional import (
    batchnorm2d,
    conv2d,
    downsample2x,
    relu,
    sigmoid,
    softmax,
    softplus,
    tanh,
    upsample2x,
)
from texture_refine.nn.layers import Module, Parameter
from texture_refine.nn.sampling import grid_sample_bilinear

__all__ = [
    "Module",
    "Parameter",
    "attention_block",
    "batchnorm2d",
    "conv2d",
    "deformable_conv2d",
    "downsample2x",
    "flow_to_offsets",
    "grid_sample_bilinear",
    "relu",
    "sigmoid",
    "softmax",
    "softplus",
    "tanh",
    "upsample2x",
]

"""Confidence network predicting the per-pixel Laplacian scale sigma."""

from __future__ import annotations

import numpy as np

from texture_refine.autograd import ops
from texture_refine.autograd.tensor import Tensor, as_tensor
from texture_refine.domain.errors import ContractViolation
from texture_refine.nn import functional as F
from texture_refine.nn.layers import Conv2d, ConvBNReLU, Module

SIGMA_FLOOR = 1e-3


class ConfidenceNet(Module):
    """Six-layer encoder-decoder with additive skips, 1-channel softplus output."""

    def __init__(self, width: int, rng: np.random.Generator):
        super().__init__()
        self.layers = [
            ConvBNReLU(3, width, rng),
            ConvBNReLU(width, width, rng),
            ConvBNReLU(width, width, rng),
            ConvBNReLU(width, width, rng),
            ConvBNReLU(width, width, rng),
            ConvBNReLU(width, width, rng),
        ]
        self.out = Conv2d(width, 1, rng)

    def forward(self, image: Tensor) -> Tensor:
        image = as_tensor(image)
        if image.ndim != 4 or image.shape[1] != 3:
            raise ContractViolation(f"confidence input must be (B,3,H,W), got {image.shape}")
        if image.shape[2] % 4 or image.shape[3] % 4:
            raise ContractViolation(f"confidence input {image.shape[2:]} must be divisible by 4")
        l1, l2, l3, l4, l5, l6 = self.layers
        full = l2(l1(image))
        half = l3(F.downsample2x(full))
        quarter = l4(F.downsample2x(half))
        up_half = l5(ops.add(F.upsample2x(quarter), half))
        up_full = l6(ops.add(F.upsample2x(up_half), full))
        return ops.clamp_min(F.softplus(self.out(up_full)), SIGMA_FLOOR)

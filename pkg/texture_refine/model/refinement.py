"""Refinement modules that turn the backbone's flow into final predictions.

``DeformableRefinement`` samples the input image at offsets derived from
the flow; ``ConvRefinement`` is the capacity-matched control that warps the
input with the flow once and refines it with plain convolutions.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from texture_refine.autograd import ops
from texture_refine.autograd.tensor import Tensor, as_tensor
from texture_refine.domain.errors import ContractViolation
from texture_refine.nn import functional as F
from texture_refine.nn.deformable import OFFSET_CHANNELS, TAPS
from texture_refine.nn.layers import Conv2d, ConvBNReLU, DeformConvBNReLU, Module, OffsetConv
from texture_refine.nn.sampling import grid_sample_bilinear
from texture_refine.model.backbone import HEAD_CHANNELS


def _tap_centering() -> np.ndarray:
    """1x1 kernel removing the per-coordinate mean over taps from an offset field."""
    weight = np.zeros((OFFSET_CHANNELS, OFFSET_CHANNELS, 1, 1))
    for k in range(TAPS):
        for j in range(TAPS):
            for c in range(2):
                weight[2 * k + c, 2 * j + c, 0, 0] = (1.0 if k == j else 0.0) - 1.0 / TAPS
    return weight


TAP_CENTERING = _tap_centering()


def kernel_shape(offsets: Tensor) -> Tensor:
    """Offsets relative to their tap mean: the kernel deformation without the shift."""
    return F.conv2d(offsets, Tensor(TAP_CENTERING), padding=0)


def _check_geometry(source: Tensor, flow: Tensor, predictions: Tensor) -> None:
    if source.ndim != 4 or source.shape[1] != 4:
        raise ContractViolation(f"refinement input must be (B,4,H,W), got {source.shape}")
    if flow.ndim != 4 or flow.shape[1] != 2 or flow.shape[0] != source.shape[0]:
        raise ContractViolation(f"flow {flow.shape} does not match input {source.shape}")
    if predictions.shape != (flow.shape[0], HEAD_CHANNELS) + flow.shape[2:]:
        raise ContractViolation(
            f"backbone predictions {predictions.shape} do not match flow {flow.shape}"
        )


class DeformableRefinement(Module):
    """Two deformable layers sharing one offset field, then a conv layer and the head.

    The first layer samples the image-sized input at the full offsets. The
    second works on UV-grid features and uses only the kernel-shape part
    of the same offsets, since the translation has already been applied.
    """

    def __init__(self, width: int, rng: np.random.Generator):
        super().__init__()
        self.offset_conv = OffsetConv()
        self.sample = DeformConvBNReLU(4, width, rng)
        self.fuse = DeformConvBNReLU(width + HEAD_CHANNELS, width, rng)
        self.refine = ConvBNReLU(width, width, rng)
        self.head = Conv2d(width, HEAD_CHANNELS, rng)
        self.last_offsets: Optional[np.ndarray] = None

    def forward(self, source: Tensor, flow: Tensor, predictions: Tensor) -> Tensor:
        source, flow, predictions = as_tensor(source), as_tensor(flow), as_tensor(predictions)
        _check_geometry(source, flow, predictions)
        offsets = self.offset_conv(flow, source.shape[2:])
        self.last_offsets = offsets.data
        x = self.sample(source, offsets)
        x = self.fuse(ops.concat([x, predictions], axis=1), kernel_shape(offsets))
        return self.head(self.refine(x))


class ConvRefinement(Module):
    """Shallow convolutional U-Net over the flow-warped input."""

    def __init__(self, width: int, rng: np.random.Generator):
        super().__init__()
        self.sample = ConvBNReLU(4, width, rng)
        self.fuse = ConvBNReLU(width + HEAD_CHANNELS, width, rng)
        self.refine = ConvBNReLU(2 * width, width, rng)
        self.head = Conv2d(width, HEAD_CHANNELS, rng)

    def forward(self, source: Tensor, flow: Tensor, predictions: Tensor) -> Tensor:
        source, flow, predictions = as_tensor(source), as_tensor(flow), as_tensor(predictions)
        _check_geometry(source, flow, predictions)
        warped = grid_sample_bilinear(source, flow)
        a = self.sample(warped)
        b = self.fuse(F.downsample2x(ops.concat([a, predictions], axis=1)))
        return self.head(self.refine(ops.concat([F.upsample2x(b), a], axis=1)))

"""Frozen random convolutional pyramid used as the perceptual feature extractor."""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence

import numpy as np

from texture_refine.autograd.tensor import Tensor, as_tensor
from texture_refine.domain.errors import ContractViolation
from texture_refine.nn import functional as F
from texture_refine.nn.layers import Conv2d, Module

STAGE_CHANNELS = (16, 32, 64, 128)
DEFAULT_SEED = 1234


class FeaturePyramid(Module):
    """Four conv-ReLU stages, each followed by 2x average pooling.

    Weights are drawn once from ``seed`` and never trained. Stage indices
    are 1-based: ``extract(x)[1]`` is the output of the first stage.
    """

    def __init__(self, seed: int = DEFAULT_SEED, channels: Sequence[int] = STAGE_CHANNELS):
        super().__init__()
        rng = np.random.default_rng(seed)
        widths = (3,) + tuple(channels)
        self.stages = [Conv2d(widths[i], widths[i + 1], rng) for i in range(len(channels))]
        self.freeze()
        self.eval()

    @property
    def depth(self) -> int:
        return len(self.stages)

    def extract(self, image: Tensor, upto: Optional[int] = None) -> Dict[int, Tensor]:
        image = as_tensor(image)
        upto = self.depth if upto is None else upto
        if image.ndim != 4 or image.shape[1] != 3:
            raise ContractViolation(f"features need (B,3,H,W), got {image.shape}")
        factor = 2 ** upto
        if image.shape[2] % factor or image.shape[3] % factor:
            raise ContractViolation(f"image {image.shape[2:]} must be divisible by {factor}")
        features: Dict[int, Tensor] = {}
        x = image
        for j, conv in enumerate(self.stages[:upto], start=1):
            x = F.downsample2x(F.relu(conv(x)))
            features[j] = x
        return features

    def forward(self, image: Tensor) -> List[Tensor]:
        features = self.extract(image)
        return [features[j] for j in sorted(features)]

    def pooled(self, image: Tensor) -> np.ndarray:
        """Global-average-pooled deepest features, (B, C), no gradient."""
        deepest = self.extract(Tensor(as_tensor(image).data))[self.depth]
        return deepest.data.mean(axis=(2, 3))

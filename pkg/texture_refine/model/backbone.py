"""Attention backbone: query/key/value encoder-decoders with cross-attention.

Each stream is six conv layers; the resolution drops after the second
and third and rises after the fourth and fifth, with the two upsampled
layers also taking the same-scale encoder features. At the three decoder
scales the query stream attends over the key/value streams.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from texture_refine.autograd import ops
from texture_refine.autograd.tensor import Tensor, as_tensor
from texture_refine.domain.errors import ContractViolation
from texture_refine.nn import functional as F
from texture_refine.nn.layers import AttentionBlock, Conv2d, DoubleConv, Module

HEAD_CHANNELS = 6


@dataclass
class StreamFeatures:
    """Decoder features at 1/4, 1/2 and full resolution."""
    quarter: Tensor
    half: Tensor
    full: Tensor


class EncoderDecoder(Module):

    def __init__(self, in_channels: int, width: int, rng: np.random.Generator):
        super().__init__()
        self.layers = [
            DoubleConv(in_channels, width, rng),
            DoubleConv(width, width, rng),
            DoubleConv(width, width, rng),
            DoubleConv(width, width, rng),
            DoubleConv(2 * width, width, rng),
            DoubleConv(2 * width, width, rng),
        ]

    def encode(self, x: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        l1, l2, l3, l4 = self.layers[:4]
        full = l2(l1(x))
        half = l3(F.downsample2x(full))
        quarter = l4(F.downsample2x(half))
        return full, half, quarter

    def forward(self, x: Tensor) -> StreamFeatures:
        full, half, quarter = self.encode(x)
        up_half = self.layers[4](ops.concat([F.upsample2x(quarter), half], axis=1))
        up_full = self.layers[5](ops.concat([F.upsample2x(up_half), full], axis=1))
        return StreamFeatures(quarter=quarter, half=up_half, full=up_full)


def query_encoding(batch: int, size: int) -> np.ndarray:
    """Colour code of the UV square: channels (u, v, 0.5), shape (B, 3, S, S)."""
    coords = np.linspace(0.0, 1.0, size)
    v, u = np.meshgrid(coords, coords, indexing="ij")
    code = np.stack([u, v, np.full_like(u, 0.5)])
    return np.broadcast_to(code, (batch, 3, size, size)).copy()


def split_head(raw: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """6-channel head -> (flow tanh, rgb tanh, mask sigmoid)."""
    flow = F.tanh(raw[:, 0:2])
    rgb = F.tanh(raw[:, 2:5])
    mask = F.sigmoid(raw[:, 5:6])
    return flow, rgb, mask


class AttentionBackbone(Module):
    """Predicts the intermediate flow, RGB texture and fusion mask on the UV grid."""

    def __init__(self, width: int, texture_size: int, rng: np.random.Generator):
        super().__init__()
        self.logger = logging.getLogger(__name__)
        self.width = width
        self.texture_size = texture_size
        self.query_stream = EncoderDecoder(3, width, rng)
        self.key_stream = EncoderDecoder(4, width, rng)
        self.value_stream = EncoderDecoder(5, width, rng)
        self.attention = [AttentionBlock(width, rng) for _ in range(3)]
        self.head = Conv2d(width, HEAD_CHANNELS, rng)

    def check_inputs(self, image: Tensor, parts: Tensor) -> None:
        if image.ndim != 4 or image.shape[1] != 3:
            raise ContractViolation(f"image must be (B,3,H,W), got {image.shape}")
        b, _, h, w = image.shape
        if parts.shape != (b, 1, h, w):
            raise ContractViolation(f"parts must be {(b, 1, h, w)}, got {parts.shape}")
        if h % 4 or w % 4 or self.texture_size % 8:
            raise ContractViolation(
                f"image {h}x{w} must be divisible by 4 and texture size {self.texture_size} by 8"
            )

    def forward(self, image: Tensor, parts: Tensor) -> Tuple[Tensor, Tensor]:
        """Returns the raw 6-channel head output and the full-scale query features."""
        image, parts = as_tensor(image), as_tensor(parts)
        self.check_inputs(image, parts)
        b, _, h, w = image.shape

        key_in = ops.concat([image, parts], axis=1)
        value_in = ops.concat([image, Tensor(F.coordinate_grid(b, h, w))], axis=1)
        keys = self.key_stream(key_in)
        values = self.value_stream(value_in)

        q_full, q_half, q_quarter = self.query_stream.encode(Tensor(query_encoding(b, self.texture_size)))
        layers: List[Module] = self.query_stream.layers
        attn_quarter, attn_half, attn_full = self.attention

        q4 = ops.add(q_quarter, attn_quarter(q_quarter, keys.quarter, values.quarter))
        q5 = layers[4](ops.concat([F.upsample2x(q4), q_half], axis=1))
        q5 = ops.add(q5, attn_half(q5, keys.half, values.half))
        q6 = layers[5](ops.concat([F.upsample2x(q5), q_full], axis=1))
        q6 = ops.add(q6, attn_full(q6, keys.full, values.full, pool=True))
        return self.head(q6), q6

"""Bilinear sampling of images at normalized flow coordinates."""

from __future__ import annotations

from typing import Tuple

import numpy as np

from texture_refine.autograd.function import Context, Function
from texture_refine.autograd.tensor import Tensor, as_tensor
from texture_refine.domain.errors import ContractViolation
from texture_refine.nn.functional import coordinate_grid


def denormalize(coord: np.ndarray, extent: int) -> np.ndarray:
    """Map [-1, 1] onto pixel centres 0..extent-1 (align-corners)."""
    return (coord + 1.0) * 0.5 * (extent - 1)


def normalize(pixel: np.ndarray, extent: int) -> np.ndarray:
    """Inverse of denormalize."""
    if extent <= 1:
        return np.zeros_like(pixel)
    return pixel / (extent - 1) * 2.0 - 1.0


def gather(flat: np.ndarray, index: np.ndarray) -> np.ndarray:
    """Pick per-batch pixels: flat (B, C, H*W), index (B, N) -> (B, C, N)."""
    b, c, _ = flat.shape
    return flat[np.arange(b)[:, None, None], np.arange(c)[None, :, None], index[:, None, :]]


def scatter_add(values: np.ndarray, index: np.ndarray, size: int) -> np.ndarray:
    """Adjoint of gather: values (B, C, N), index (B, N) -> (B, C, size)."""
    b, c, _ = values.shape
    out = np.empty((b, c, size))
    offsets = (np.arange(c) * size)[:, None]
    for bi in range(b):
        linear = (offsets + index[bi][None, :]).ravel()
        out[bi] = np.bincount(linear, weights=values[bi].ravel(), minlength=c * size).reshape(c, size)
    return out


def _corners(px: np.ndarray, py: np.ndarray, height: int, width: int):
    """Border-clamped bilinear corners and weights for pixel positions."""
    inside_x = (px >= 0) & (px <= width - 1)
    inside_y = (py >= 0) & (py <= height - 1)
    cx = np.clip(px, 0, width - 1)
    cy = np.clip(py, 0, height - 1)
    x0 = np.floor(cx).astype(np.int64)
    y0 = np.floor(cy).astype(np.int64)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    lx = cx - x0
    ly = cy - y0
    return x0, x1, y0, y1, lx, ly, inside_x, inside_y


class GridSampleFunction(Function):

    @staticmethod
    def forward(ctx: Context, image: np.ndarray, flow: np.ndarray) -> np.ndarray:
        b, c, h, w = image.shape
        _, _, ho, wo = flow.shape
        px = denormalize(flow[:, 0].reshape(b, -1), w)
        py = denormalize(flow[:, 1].reshape(b, -1), h)
        x0, x1, y0, y1, lx, ly, inside_x, inside_y = _corners(px, py, h, w)

        flat = image.reshape(b, c, h * w)
        v00 = gather(flat, y0 * w + x0)
        v01 = gather(flat, y0 * w + x1)
        v10 = gather(flat, y1 * w + x0)
        v11 = gather(flat, y1 * w + x1)
        wx, wy = lx[:, None, :], ly[:, None, :]
        out = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11)

        ctx.save_for_backward(
            image.shape, (x0, x1, y0, y1, lx, ly, inside_x, inside_y), (v00, v01, v10, v11)
        )
        return out.reshape(b, c, ho, wo)

    @staticmethod
    def backward(ctx: Context, grad_output: np.ndarray):
        (b, c, h, w), corners, values = ctx.saved
        x0, x1, y0, y1, lx, ly, inside_x, inside_y = corners
        v00, v01, v10, v11 = values
        ho, wo = grad_output.shape[2:]
        g = grad_output.reshape(b, c, -1)
        wx, wy = lx[:, None, :], ly[:, None, :]

        grad_image = None
        if ctx.needs_input_grad[0]:
            grad_image = (
                scatter_add(g * (1 - wy) * (1 - wx), y0 * w + x0, h * w)
                + scatter_add(g * (1 - wy) * wx, y0 * w + x1, h * w)
                + scatter_add(g * wy * (1 - wx), y1 * w + x0, h * w)
                + scatter_add(g * wy * wx, y1 * w + x1, h * w)
            ).reshape(b, c, h, w)

        grad_flow = None
        if ctx.needs_input_grad[1]:
            d_px = ((1 - wy) * (v01 - v00) + wy * (v11 - v10))
            d_py = ((1 - wx) * (v10 - v00) + wx * (v11 - v01))
            gx = (g * d_px).sum(axis=1) * inside_x * (0.5 * (w - 1))
            gy = (g * d_py).sum(axis=1) * inside_y * (0.5 * (h - 1))
            grad_flow = np.stack([gx, gy], axis=1).reshape(b, 2, ho, wo)
        return grad_image, grad_flow


def grid_sample_bilinear(image: Tensor, flow: Tensor) -> Tensor:
    """Sample ``image`` (B,C,H,W) at the normalized coordinates in ``flow`` (B,2,Ho,Wo).

    Channel 0 of the flow is x (width axis), channel 1 is y. Positions
    outside the image are clamped to the border.
    """
    image, flow = as_tensor(image), as_tensor(flow)
    if image.ndim != 4 or flow.ndim != 4 or flow.shape[1] != 2:
        raise ContractViolation(f"grid_sample expects (B,C,H,W) and (B,2,H,W), got {image.shape}, {flow.shape}")
    if image.shape[0] != flow.shape[0]:
        raise ContractViolation(f"grid_sample batch mismatch {image.shape[0]} vs {flow.shape[0]}")
    if not np.all(np.isfinite(flow.data)):
        raise ContractViolation("grid_sample received a non-finite flow")
    return GridSampleFunction.apply(image, flow)


def identity_flow(batch: int, height: int, width: int) -> np.ndarray:
    """Flow that samples every pixel of an (height, width) image at itself."""
    return coordinate_grid(batch, height, width)


def footprint(flow: np.ndarray, height: int, width: int) -> Tuple[np.ndarray, ...]:
    """Integer corner indices touched by each sample (used for visibility)."""
    b = flow.shape[0]
    px = denormalize(flow[:, 0].reshape(b, -1), width)
    py = denormalize(flow[:, 1].reshape(b, -1), height)
    x0, x1, y0, y1, lx, ly, _, _ = _corners(px, py, height, width)
    return x0, x1, y0, y1, lx, ly

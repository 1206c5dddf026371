"""Deformable 3x3 convolution with decoupled input and output sizes.

The output grid is given by the offset field: an offset field of spatial
size (H_out, W_out) produces an output of that size whatever the input
size is. Output pixel (i, j) is centred on the input position

    x_b = (j + 0.5) * W_in / W_out - 0.5
    y_b = (i + 0.5) * H_in / H_out - 0.5

and tap k = (ky, kx) samples the input bilinearly at
(x_b + kx - 1 + dx_k, y_b + ky - 1 + dy_k) with zeros outside the image.
Offset channels are ordered (dy_0, dx_0, dy_1, dx_1, ..., dy_8, dx_8).
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from texture_refine.autograd import ops
from texture_refine.autograd.function import Context, Function
from texture_refine.autograd.tensor import Tensor, as_tensor
from texture_refine.domain.errors import ContractViolation
from texture_refine.nn.functional import conv2d
from texture_refine.nn.sampling import gather, scatter_add

KERNEL = 3
TAPS = KERNEL * KERNEL
OFFSET_CHANNELS = 2 * TAPS


def base_grid(in_size: Tuple[int, int], out_size: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """Input-pixel coordinates (y_b, x_b) of every output pixel, each (H_out, W_out)."""
    h_in, w_in = in_size
    h_out, w_out = out_size
    ys = (np.arange(h_out) + 0.5) * h_in / h_out - 0.5
    xs = (np.arange(w_out) + 0.5) * w_in / w_out - 0.5
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return gy, gx


def _tap_samples(x: np.ndarray, py: np.ndarray, px: np.ndarray):
    """Zero-padded bilinear samples of x (B,C,H,W) at (B,N) positions.

    Returns the sample (B,C,N), the four masked corner values and the
    fractional weights, plus the flat corner indices and validity masks.
    """
    b, c, h, w = x.shape
    y0 = np.floor(py).astype(np.int64)
    x0 = np.floor(px).astype(np.int64)
    ly = py - y0
    lx = px - x0
    flat = x.reshape(b, c, h * w)

    corners = []
    for yc, xc in ((y0, x0), (y0, x0 + 1), (y0 + 1, x0), (y0 + 1, x0 + 1)):
        valid = (yc >= 0) & (yc < h) & (xc >= 0) & (xc < w)
        idx = np.clip(yc, 0, h - 1) * w + np.clip(xc, 0, w - 1)
        values = gather(flat, idx) * valid[:, None, :]
        corners.append((idx, valid, values))

    (_, _, v00), (_, _, v01), (_, _, v10), (_, _, v11) = corners
    wy, wx = ly[:, None, :], lx[:, None, :]
    sample = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11)
    return sample, corners, ly, lx


class DeformConv2dFunction(Function):

    @staticmethod
    def forward(ctx: Context, x: np.ndarray, offsets: np.ndarray, weight: np.ndarray) -> np.ndarray:
        b, _, h_in, w_in = x.shape
        _, _, h_out, w_out = offsets.shape
        c_out = weight.shape[0]
        gy, gx = base_grid((h_in, w_in), (h_out, w_out))
        gy, gx = gy.reshape(1, -1), gx.reshape(1, -1)
        off = offsets.reshape(b, OFFSET_CHANNELS, -1)

        out = np.zeros((c_out, b, h_out * w_out))
        for k in range(TAPS):
            ky, kx = divmod(k, KERNEL)
            py = gy + (ky - 1) + off[:, 2 * k]
            px = gx + (kx - 1) + off[:, 2 * k + 1]
            sample, _, _, _ = _tap_samples(x, py, px)
            out += np.tensordot(weight[:, :, ky, kx], sample, axes=([1], [1]))

        ctx.save_for_backward(x, offsets, weight, gy, gx)
        return out.transpose(1, 0, 2).reshape(b, c_out, h_out, w_out)

    @staticmethod
    def backward(ctx: Context, grad_output: np.ndarray):
        x, offsets, weight, gy, gx = ctx.saved
        b, c_in, h_in, w_in = x.shape
        need_x, need_off, need_w = ctx.needs_input_grad
        g = grad_output.reshape(b, weight.shape[0], -1)
        off = offsets.reshape(b, OFFSET_CHANNELS, -1)

        grad_x = np.zeros((b, c_in, h_in * w_in)) if need_x else None
        grad_off = np.zeros_like(off) if need_off else None
        grad_w = np.zeros_like(weight) if need_w else None

        for k in range(TAPS):
            ky, kx = divmod(k, KERNEL)
            py = gy + (ky - 1) + off[:, 2 * k]
            px = gx + (kx - 1) + off[:, 2 * k + 1]
            sample, corners, ly, lx = _tap_samples(x, py, px)

            if need_w:
                grad_w[:, :, ky, kx] = np.tensordot(g, sample, axes=([0, 2], [0, 2]))
            if not (need_x or need_off):
                continue

            grad_sample = np.tensordot(weight[:, :, ky, kx], g, axes=([0], [1])).transpose(1, 0, 2)
            wy, wx = ly[:, None, :], lx[:, None, :]
            (i00, m00, v00), (i01, m01, v01), (i10, m10, v10), (i11, m11, v11) = corners

            if need_x:
                for idx, valid, weight_c in (
                    (i00, m00, (1 - wy) * (1 - wx)),
                    (i01, m01, (1 - wy) * wx),
                    (i10, m10, wy * (1 - wx)),
                    (i11, m11, wy * wx),
                ):
                    grad_x += scatter_add(grad_sample * weight_c * valid[:, None, :], idx, h_in * w_in)

            if need_off:
                d_py = (1 - wx) * (v10 - v00) + wx * (v11 - v01)
                d_px = (1 - wy) * (v01 - v00) + wy * (v11 - v10)
                grad_off[:, 2 * k] = (grad_sample * d_py).sum(axis=1)
                grad_off[:, 2 * k + 1] = (grad_sample * d_px).sum(axis=1)

        if need_x:
            grad_x = grad_x.reshape(x.shape)
        if need_off:
            grad_off = grad_off.reshape(offsets.shape)
        return grad_x, grad_off, grad_w


def deformable_conv2d(
    x: Tensor,
    offsets: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
) -> Tensor:
    """Deformable convolution; the output takes the offset field's spatial size."""
    x, offsets, weight = as_tensor(x), as_tensor(offsets), as_tensor(weight)
    if x.ndim != 4 or offsets.ndim != 4:
        raise ContractViolation(f"deformable_conv2d expects 4D tensors, got {x.shape}, {offsets.shape}")
    if offsets.shape[1] != OFFSET_CHANNELS:
        raise ContractViolation(
            f"offset field must have {OFFSET_CHANNELS} channels, got {offsets.shape[1]}"
        )
    if offsets.shape[0] != x.shape[0]:
        raise ContractViolation(f"batch mismatch between input {x.shape} and offsets {offsets.shape}")
    if weight.shape[1:] != (x.shape[1], KERNEL, KERNEL):
        raise ContractViolation(f"weight {weight.shape} does not fit input channels {x.shape[1]}")
    out = DeformConv2dFunction.apply(x, offsets, weight)
    if bias is not None:
        out = ops.add_channel_bias(out, bias)
    return out


def replication_weights() -> Tuple[np.ndarray, np.ndarray]:
    """offset_conv init: every tap copies the raw (dy, dx) offset map."""
    weight = np.zeros((OFFSET_CHANNELS, 2, KERNEL, KERNEL))
    for k in range(TAPS):
        weight[2 * k, 0, 1, 1] = 1.0
        weight[2 * k + 1, 1, 1, 1] = 1.0
    return weight, np.zeros(OFFSET_CHANNELS)


def flow_to_offsets(
    flow: Tensor,
    in_size: Tuple[int, int],
    offset_weight: Tensor,
    offset_bias: Tensor,
) -> Tensor:
    """Turn a normalized flow over the output grid into a per-tap offset field.

    1. denormalize the flow to absolute input-pixel coordinates;
    2. subtract the deformable base grid, giving a raw (dy, dx) map;
    3. a 3x3 convolution (2 -> 18 channels) spreads it over the taps.
    """
    flow = as_tensor(flow)
    if flow.ndim != 4 or flow.shape[1] != 2:
        raise ContractViolation(f"flow must be (B,2,H,W), got {flow.shape}")
    b, _, h_out, w_out = flow.shape
    h_in, w_in = in_size
    gy, gx = base_grid((h_in, w_in), (h_out, w_out))

    half_w = 0.5 * (w_in - 1)
    half_h = 0.5 * (h_in - 1)
    shift_x = np.broadcast_to(half_w - gx, (b, 1, h_out, w_out)).copy()
    shift_y = np.broadcast_to(half_h - gy, (b, 1, h_out, w_out)).copy()

    raw_x = ops.add(ops.mul(flow[:, 0:1], half_w), shift_x)
    raw_y = ops.add(ops.mul(flow[:, 1:2], half_h), shift_y)
    raw = ops.concat([raw_y, raw_x], axis=1)
    return conv2d(raw, offset_weight, offset_bias, padding=1)


def sampling_positions(offsets: np.ndarray, in_size: Tuple[int, int]) -> np.ndarray:
    """Absolute (y, x) input positions of all taps, shape (B, 9, 2, H_out, W_out)."""
    b, _, h_out, w_out = offsets.shape
    gy, gx = base_grid(in_size, (h_out, w_out))
    positions = np.empty((b, TAPS, 2, h_out, w_out))
    for k in range(TAPS):
        ky, kx = divmod(k, KERNEL)
        positions[:, k, 0] = gy + (ky - 1) + offsets[:, 2 * k]
        positions[:, k, 1] = gx + (kx - 1) + offsets[:, 2 * k + 1]
    return positions

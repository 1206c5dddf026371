"""Convolution, normalization, pooling and activation primitives.

Images are (B, C, H, W) float64 tensors.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from texture_refine.autograd import ops
from texture_refine.autograd.function import Context, Function
from texture_refine.autograd.tensor import Tensor, as_tensor, make_result
from texture_refine.domain.errors import ContractViolation

relu = ops.relu
tanh = ops.tanh
sigmoid = ops.sigmoid
softplus = ops.softplus


class Conv2dFunction(Function):
    """Stride-1 cross-correlation with symmetric zero padding.

    The kernel is applied tap by tap as a matrix product over channels,
    which avoids materializing an im2col buffer.
    """

    @staticmethod
    def forward(ctx: Context, x: np.ndarray, weight: np.ndarray, padding: int = 1) -> np.ndarray:
        _, _, height, width = x.shape
        _, _, kh, kw = weight.shape
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        out_h = height + 2 * padding - kh + 1
        out_w = width + 2 * padding - kw + 1
        if out_h <= 0 or out_w <= 0:
            raise ContractViolation(f"kernel {kh}x{kw} larger than padded input {x.shape}")

        out = None
        for ky in range(kh):
            for kx in range(kw):
                window = xp[:, :, ky:ky + out_h, kx:kx + out_w]
                term = np.tensordot(weight[:, :, ky, kx], window, axes=([1], [1]))
                out = term if out is None else out + term
        ctx.save_for_backward(xp, weight, padding, (out_h, out_w), x.shape)
        return np.ascontiguousarray(out.transpose(1, 0, 2, 3))

    @staticmethod
    def backward(ctx: Context, grad_output: np.ndarray):
        xp, weight, padding, (out_h, out_w), x_shape = ctx.saved
        _, _, kh, kw = weight.shape
        need_x, need_w = ctx.needs_input_grad[:2]
        grad_xp = np.zeros_like(xp) if need_x else None
        grad_w = np.zeros_like(weight) if need_w else None

        for ky in range(kh):
            for kx in range(kw):
                if need_w:
                    window = xp[:, :, ky:ky + out_h, kx:kx + out_w]
                    grad_w[:, :, ky, kx] = np.tensordot(
                        grad_output, window, axes=([0, 2, 3], [0, 2, 3])
                    )
                if need_x:
                    contrib = np.tensordot(grad_output, weight[:, :, ky, kx], axes=([1], [0]))
                    grad_xp[:, :, ky:ky + out_h, kx:kx + out_w] += contrib.transpose(0, 3, 1, 2)

        grad_x = None
        if need_x:
            h, w = x_shape[2], x_shape[3]
            grad_x = grad_xp[:, :, padding:padding + h, padding:padding + w]
        return grad_x, grad_w


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, padding: int = 1) -> Tensor:
    """2D convolution, stride 1. ``weight`` is (out, in, kh, kw)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ContractViolation(f"conv2d expects 4D input and weight, got {x.shape}, {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ContractViolation(
            f"conv2d channel mismatch: input has {x.shape[1]}, weight expects {weight.shape[1]}"
        )
    out = Conv2dFunction.apply(x, weight, padding=padding)
    if bias is not None:
        out = ops.add_channel_bias(out, bias)
    return out


class BatchNormFunction(Function):
    """Normalization with batch statistics (training mode)."""

    @staticmethod
    def forward(ctx: Context, x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5):
        axes = (0, 2, 3)
        mean = x.mean(axis=axes, keepdims=True)
        var = x.var(axis=axes, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + eps)
        x_hat = (x - mean) * inv_std
        ctx.save_for_backward(x_hat, inv_std, gamma)
        return x_hat * gamma.reshape(1, -1, 1, 1) + beta.reshape(1, -1, 1, 1)

    @staticmethod
    def backward(ctx: Context, grad_output: np.ndarray):
        x_hat, inv_std, gamma = ctx.saved
        axes = (0, 2, 3)
        count = grad_output.size / grad_output.shape[1]
        grad_gamma = (grad_output * x_hat).sum(axis=axes)
        grad_beta = grad_output.sum(axis=axes)
        g_hat = grad_output * gamma.reshape(1, -1, 1, 1)
        grad_x = (
            inv_std / count
            * (count * g_hat
               - g_hat.sum(axis=axes, keepdims=True)
               - x_hat * (g_hat * x_hat).sum(axis=axes, keepdims=True))
        )
        return grad_x, grad_gamma, grad_beta


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalization over (B, H, W) per channel.

    In training mode the running statistics are updated in place
    (unbiased variance); in eval mode they normalize the input.
    """
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[1] != gamma.shape[0]:
        raise ContractViolation(f"batchnorm2d: {x.shape} does not match {gamma.shape[0]} channels")
    if training:
        axes = (0, 2, 3)
        count = x.size / x.shape[1]
        batch_mean = x.data.mean(axis=axes)
        batch_var = x.data.var(axis=axes)
        unbiased = batch_var * count / max(count - 1.0, 1.0)
        running_mean *= 1.0 - momentum
        running_mean += momentum * batch_mean
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
        return BatchNormFunction.apply(x, gamma, beta, eps=eps)

    inv_std = 1.0 / np.sqrt(running_var + eps)
    shifted = ops.add_channel_bias(x, Tensor(-running_mean))
    normalized = ops.scale_channels(shifted, Tensor(inv_std))
    return ops.add_channel_bias(ops.scale_channels(normalized, gamma), beta)


def _check_even(x: Tensor, op: str) -> None:
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ContractViolation(f"{op} needs even spatial extents, got {x.shape}")


def downsample2x(x: Tensor) -> Tensor:
    """2x2 average pooling."""
    x = as_tensor(x)
    _check_even(x, "downsample2x")
    b, c, h, w = x.shape
    out = x.data.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25,)

    return make_result(out, (x,), backward, "downsample2x")


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ContractViolation(f"upsample2x expects (B,C,H,W), got {x.shape}")
    b, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward(g):
        return (g.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return make_result(out, (x,), backward, "upsample2x")


class SoftmaxFunction(Function):
    """Softmax over the last axis with max subtraction."""

    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=-1, keepdims=True)
        ctx.save_for_backward(out)
        return out

    @staticmethod
    def backward(ctx: Context, grad_output: np.ndarray):
        (out,) = ctx.saved
        dot = (grad_output * out).sum(axis=-1, keepdims=True)
        return (out * (grad_output - dot),)


def softmax(x: Tensor) -> Tensor:
    return SoftmaxFunction.apply(x)


def coordinate_grid(batch: int, height: int, width: int) -> np.ndarray:
    """(B, 2, H, W) normalized coordinates, channel 0 = x, channel 1 = y, in [-1, 1]."""
    ys = np.linspace(-1.0, 1.0, height) if height > 1 else np.zeros(1)
    xs = np.linspace(-1.0, 1.0, width) if width > 1 else np.zeros(1)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    grid = np.stack([gx, gy])[None]
    return np.repeat(grid, batch, axis=0)


def spatial_shape(x: Tensor) -> Tuple[int, int]:
    return x.shape[2], x.shape[3]

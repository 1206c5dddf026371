"""Image similarity measures: SSIM, PSNR and feature-space similarities.

``ssim`` is differentiable (it is reused by the face-structure loss);
the other measures work on plain arrays.
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np

from texture_refine.autograd import ops
from texture_refine.autograd.tensor import Tensor, as_tensor
from texture_refine.domain.errors import ContractViolation
from texture_refine.losses.features import FeaturePyramid
from texture_refine.nn.functional import conv2d

SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 3.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PSNR_CAP = 99.0

Image = Union[Tensor, np.ndarray]


def gaussian_window(sigma: float = SSIM_SIGMA, truncate: float = SSIM_TRUNCATE) -> np.ndarray:
    radius = int(truncate * sigma + 0.5)
    coords = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


WINDOW = gaussian_window()


def to_unit(image: np.ndarray) -> np.ndarray:
    """[-1, 1] network range -> [0, 1]."""
    return (np.asarray(image, dtype=np.float64) + 1.0) * 0.5


def _as_batch(x: Tensor) -> Tensor:
    if x.ndim == 3:
        return ops.reshape(x, (1,) + x.shape)
    if x.ndim != 4:
        raise ContractViolation(f"ssim expects (C,H,W) or (B,C,H,W), got {x.shape}")
    return x


def _filter(x: Tensor) -> Tensor:
    """Depthwise 'valid' Gaussian filtering of (B,C,H,W)."""
    b, c, h, w = x.shape
    flat = ops.reshape(x, (b * c, 1, h, w))
    out = conv2d(flat, Tensor(WINDOW[None, None]), padding=0)
    return ops.reshape(out, (b, c) + out.shape[2:])


def ssim_map(a: Image, b: Image) -> Tensor:
    """Local SSIM map of two [0, 1] images, (B, C, H-10, W-10)."""
    a, b = _as_batch(as_tensor(a)), _as_batch(as_tensor(b))
    if a.shape != b.shape:
        raise ContractViolation(f"ssim shape mismatch {a.shape} vs {b.shape}")
    size = WINDOW.shape[0]
    if a.shape[2] < size or a.shape[3] < size:
        raise ContractViolation(f"image {a.shape[2:]} smaller than the {size}x{size} SSIM window")

    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    mu_a = _filter(a)
    mu_b = _filter(b)
    mu_aa = ops.mul(mu_a, mu_a)
    mu_bb = ops.mul(mu_b, mu_b)
    mu_ab = ops.mul(mu_a, mu_b)
    var_a = ops.sub(_filter(ops.mul(a, a)), mu_aa)
    var_b = ops.sub(_filter(ops.mul(b, b)), mu_bb)
    cov = ops.sub(_filter(ops.mul(a, b)), mu_ab)

    numerator = ops.mul(ops.add(ops.mul(mu_ab, 2.0), c1), ops.add(ops.mul(cov, 2.0), c2))
    denominator = ops.mul(ops.add(ops.add(mu_aa, mu_bb), c1), ops.add(ops.add(var_a, var_b), c2))
    return ops.div(numerator, denominator)


def ssim(a: Image, b: Image) -> Tensor:
    """Mean SSIM over every window, channel and batch element (scalar Tensor)."""
    return ops.mean(ssim_map(a, b))


def ssim_per_image(a: Image, b: Image) -> Tensor:
    """Mean SSIM of each batch element, shape (B,)."""
    return ops.mean(ssim_map(a, b), axis=(1, 2, 3))


def ssim_value(a: np.ndarray, b: np.ndarray) -> float:
    return ssim(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)).item()


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB for [0, 1] images; identical inputs give the 99 dB cap."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation(f"psnr shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def _batch_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None] if x.ndim == 3 else x


def cossim(a: np.ndarray, b: np.ndarray, features: FeaturePyramid) -> float:
    """Cosine similarity of the pooled deepest features, averaged over the batch."""
    fa = features.pooled(_batch_array(a))
    fb = features.pooled(_batch_array(b))
    dots = np.sum(fa * fb, axis=1)
    norms = np.linalg.norm(fa, axis=1) * np.linalg.norm(fb, axis=1)
    values = np.where(norms > 1e-12, dots / np.maximum(norms, 1e-12), np.where(np.allclose(fa, fb), 1.0, 0.0))
    return float(np.clip(values, -1.0, 1.0).mean())


def pdist(a: np.ndarray, b: np.ndarray, features: FeaturePyramid) -> float:
    """Mean squared feature distance averaged over the pyramid stages."""
    fa = features.extract(_batch_array(a))
    fb = features.extract(_batch_array(b))
    return float(np.mean([np.mean((fa[j].data - fb[j].data) ** 2) for j in fa]))

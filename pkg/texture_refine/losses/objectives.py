"""Training objectives.

Per-sample losses are averaged over the batch; within a sample they follow
the definitions exactly (sums of squares, sums over pixels).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from texture_refine.autograd import ops
from texture_refine.autograd.tensor import Tensor, as_tensor
from texture_refine.domain.errors import ContractViolation
from texture_refine.domain.models import FaceBank
from texture_refine.losses.features import FeaturePyramid
from texture_refine.losses.schedule import LossWeights
from texture_refine.metrics.image import WINDOW, ssim_per_image
from texture_refine.model.confidence import SIGMA_FLOOR

REID_LAYERS = (1, 2, 3, 4)
SQRT2 = math.sqrt(2.0)

Scalar = Union[Tensor, float]


def _batch_mean(per_sample_sum: Tensor, batch: int) -> Tensor:
    return ops.mul(per_sample_sum, 1.0 / batch)


def _check_pair(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ContractViolation(f"{op}: shape mismatch {a.shape} vs {b.shape}")
    if a.ndim != 4:
        raise ContractViolation(f"{op}: expected (B,C,H,W), got {a.shape}")


def reid_loss(
    image: Tensor,
    rendered: Tensor,
    features: FeaturePyramid,
    layers: Sequence[int] = REID_LAYERS,
) -> Tensor:
    """Sum over layers of the squared feature distance between the two images."""
    image, rendered = as_tensor(image), as_tensor(rendered)
    _check_pair(image, rendered, "reid_loss")
    fa = features.extract(image, upto=max(layers))
    fb = features.extract(rendered, upto=max(layers))
    total = ops.optional_sum([ops.sum(ops.square(ops.sub(fa[j], fb[j]))) for j in layers])
    return _batch_mean(total, image.shape[0])


def gram(x: Tensor) -> Tensor:
    """(B, C, H, W) -> (B, C, C), normalized by C*H*W."""
    b, c, h, w = x.shape
    flat = ops.reshape(x, (b, c, h * w))
    return ops.mul(ops.matmul(flat, ops.transpose(flat, (0, 2, 1))), 1.0 / (c * h * w))


def resize_nearest(masks: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resize of (B, P, H, W) masks to (B, P, h, w)."""
    _, _, height, width = masks.shape
    h, w = size
    rows = np.minimum(((np.arange(h) + 0.5) * height / h).astype(np.int64), height - 1)
    cols = np.minimum(((np.arange(w) + 0.5) * width / w).astype(np.int64), width - 1)
    return masks[:, :, rows][:, :, :, cols]


def _masked(features: Tensor, mask: np.ndarray) -> Tensor:
    channels = features.shape[1]
    return ops.mul(features, np.repeat(mask[:, None], channels, axis=1))


def part_style_loss(
    image: Tensor,
    rendered: Tensor,
    parts: np.ndarray,
    rendered_parts: np.ndarray,
    features: FeaturePyramid,
) -> Tensor:
    """Sum over parts of the squared Gram distance of masked first-stage features."""
    image, rendered = as_tensor(image), as_tensor(rendered)
    _check_pair(image, rendered, "part_style_loss")
    parts = np.asarray(parts, dtype=np.float64)
    rendered_parts = np.asarray(rendered_parts, dtype=np.float64)
    if parts.shape != rendered_parts.shape or parts.shape[0] != image.shape[0]:
        raise ContractViolation(
            f"part_style_loss: part masks {parts.shape} vs {rendered_parts.shape} for batch {image.shape[0]}"
        )
    fa = features.extract(image, upto=1)[1]
    fb = features.extract(rendered, upto=1)[1]
    size = fa.shape[2:]
    ma = resize_nearest(parts, size)
    mb = resize_nearest(rendered_parts, size)
    terms = []
    for p in range(parts.shape[1]):
        ga = gram(_masked(fa, ma[:, p]))
        gb = gram(_masked(fb, mb[:, p]))
        terms.append(ops.sum(ops.square(ops.sub(ga, gb))))
    return _batch_mean(ops.optional_sum(terms), image.shape[0])


def face_window(face_mask: np.ndarray) -> Tuple[slice, slice]:
    """Bounding box of the face mask, grown to at least the SSIM window size."""
    rows, cols = np.nonzero(face_mask)
    if rows.size == 0:
        raise ContractViolation("face mask is empty")
    size = WINDOW.shape[0]

    def grow(lo: int, hi: int, extent: int) -> slice:
        if extent < size:
            raise ContractViolation(f"texture extent {extent} smaller than the SSIM window")
        missing = max(0, size - (hi - lo))
        lo = max(0, lo - missing // 2)
        hi = min(extent, max(hi, lo + size))
        lo = min(lo, hi - size)
        return slice(lo, hi)

    return grow(rows.min(), rows.max() + 1, face_mask.shape[0]), grow(cols.min(), cols.max() + 1, face_mask.shape[1])


def face_structure_loss(texture: Tensor, bank: FaceBank) -> Tensor:
    """-mean_i SSIM(M_face * T, M_face * F_i), on the face window and the [0, 1] range."""
    texture = as_tensor(texture)
    if len(bank) == 0:
        raise ContractViolation("face bank is empty")
    if texture.ndim != 4 or texture.shape[1] != 3:
        raise ContractViolation(f"face_structure_loss needs (B,3,S,S), got {texture.shape}")
    if texture.shape[2:] != bank.face_mask.shape:
        raise ContractViolation(f"texture {texture.shape[2:]} vs face mask {bank.face_mask.shape}")

    rows, cols = face_window(bank.face_mask)
    b = texture.shape[0]
    mask = bank.face_mask[rows, cols]
    mask3 = np.broadcast_to(mask, (b, 3) + mask.shape).copy()
    crop = ops.index(texture, (slice(None), slice(None), rows, cols))
    masked = ops.mul(ops.mul(ops.add(crop, 1.0), 0.5), mask3)

    scores = []
    for reference in bank.textures:
        ref = (np.asarray(reference)[:, rows, cols] + 1.0) * 0.5 * mask
        ref = np.broadcast_to(ref, masked.shape).copy()
        scores.append(ops.sum(ssim_per_image(masked, ref)))
    total = ops.mul(ops.optional_sum(scores), -1.0 / len(bank))
    return _batch_mean(total, b)


@dataclass
class BaseTerms:
    reid: Tensor
    style: Tensor
    face: Tensor

    def combined(self, weights: LossWeights) -> Tensor:
        return ops.add(
            ops.add(ops.mul(self.reid, weights.reid), ops.mul(self.style, weights.style)),
            ops.mul(self.face, weights.face),
        )


def base_terms(
    image: Tensor,
    rendered: Tensor,
    parts: np.ndarray,
    rendered_parts: np.ndarray,
    texture: Tensor,
    bank: FaceBank,
    features: FeaturePyramid,
) -> BaseTerms:
    return BaseTerms(
        reid=reid_loss(image, rendered, features),
        style=part_style_loss(image, rendered, parts, rendered_parts, features),
        face=face_structure_loss(texture, bank),
    )


def base_loss(
    image: Tensor,
    rendered: Tensor,
    parts: np.ndarray,
    rendered_parts: np.ndarray,
    texture: Tensor,
    bank: FaceBank,
    features: FeaturePyramid,
    weights: LossWeights,
) -> Tensor:
    """lambda1 * L_reid + lambda2 * L_style + lambda3 * L_face."""
    return base_terms(image, rendered, parts, rendered_parts, texture, bank, features).combined(weights)


def uncertainty_recon_loss(image: Tensor, rendered: Tensor, sigma: Tensor) -> Tensor:
    """Laplacian NLL: sum over pixels and channels of ln(sqrt2*sigma) + sqrt2*|I - I_r| / sigma.

    sigma is (B, 1, H, W) and shared by the three colour channels.
    """
    image, rendered, sigma = as_tensor(image), as_tensor(rendered), as_tensor(sigma)
    _check_pair(image, rendered, "uncertainty_recon_loss")
    b, c, h, w = image.shape
    if sigma.shape != (b, 1, h, w):
        raise ContractViolation(f"sigma must be {(b, 1, h, w)}, got {sigma.shape}")
    if np.min(sigma.data) < SIGMA_FLOOR * (1.0 - 1e-12):
        raise ContractViolation(f"sigma below the {SIGMA_FLOOR} floor: {np.min(sigma.data)}")
    s = ops.expand_channels(sigma, c)
    log_term = ops.log(ops.mul(s, SQRT2))
    residual = ops.absolute(ops.sub(image, rendered))
    scaled = ops.div(ops.mul(residual, SQRT2), s)
    return _batch_mean(ops.sum(ops.add(log_term, scaled)), b)


def cycle_loss(first: Tensor, second: Tensor, stopgrad: bool = False) -> Tensor:
    """Mean over the batch of the per-sample L2 norm ||T_first - T_second||."""
    first, second = as_tensor(first), as_tensor(second)
    if first.shape != second.shape:
        raise ContractViolation(f"cycle_loss: shape mismatch {first.shape} vs {second.shape}")
    second = ops.detach(second, stopgrad)
    diff = ops.sub(first, second)
    b = first.shape[0]
    norms = [ops.norm(ops.index(diff, i)) for i in range(b)]
    return _batch_mean(ops.optional_sum(norms), b)


@dataclass
class LossBreakdown:
    total: Tensor
    terms: Dict[str, float]

    def values(self) -> Dict[str, float]:
        values = dict(self.terms)
        values["total"] = self.total.item()
        return values


def _value(term: Optional[Scalar]) -> float:
    if term is None:
        return 0.0
    return term.item() if isinstance(term, Tensor) else float(term)


def total_loss(
    weights: LossWeights,
    base_sv: Scalar,
    base_nv: Optional[Scalar] = None,
    cycle: Optional[Scalar] = None,
    url: Optional[Scalar] = None,
    intermediate_sv: Optional[Scalar] = None,
    intermediate_nv: Optional[Scalar] = None,
    intermediate_weight: float = 0.0,
    extra: Optional[Dict[str, float]] = None,
) -> LossBreakdown:
    """L_base-sv + L_base-nv + l4 L_cyc + l5 L_url + w_int [L_int-sv + L_int-nv].

    Absent terms (single-view mode, disabled switches) contribute nothing.
    """
    scaled = [
        as_tensor(base_sv),
        None if base_nv is None else as_tensor(base_nv),
        None if cycle is None else ops.mul(cycle, weights.cycle),
        None if url is None else ops.mul(url, weights.url),
    ]
    if intermediate_weight > 0.0:
        inter = ops.optional_sum([
            None if intermediate_sv is None else as_tensor(intermediate_sv),
            None if intermediate_nv is None else as_tensor(intermediate_nv),
        ])
        scaled.append(ops.mul(inter, intermediate_weight))
    total = ops.optional_sum(scaled)

    terms = {
        "base_sv": _value(base_sv),
        "base_nv": _value(base_nv),
        "cycle": _value(cycle),
        "url": _value(url),
        "int_sv": _value(intermediate_sv),
        "int_nv": _value(intermediate_nv),
        "w_int": float(intermediate_weight),
    }
    terms.update(extra or {})
    return LossBreakdown(total=total, terms=terms)

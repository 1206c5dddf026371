"""Central-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Union

import numpy as np

from texture_refine.autograd.tensor import Tape, Tensor
from texture_refine.domain.errors import ContractViolation, GradCheckFailure

MAX_ELEMENTS = 10_000


def _evaluate(f: Callable[[Tensor], Tensor], values: np.ndarray, index) -> float:
    out = f(Tensor(values))
    if out.size != 1:
        raise ContractViolation(f"gradient check needs a scalar function, got shape {out.shape}")
    value = out.item()
    if not np.isfinite(value):
        raise GradCheckFailure(index, value)
    return value


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Union[Tensor, np.ndarray],
    eps: float = 1e-6,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The relative error of one element is
    |g_analytic - g_numeric| / max(1e-8, |g_analytic| + |g_numeric|).
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    if x0.size > MAX_ELEMENTS:
        raise ContractViolation(f"gradient check limited to {MAX_ELEMENTS} elements, got {x0.size}")

    point = Tensor(x0.copy(), requires_grad=True)
    with Tape() as tape:
        out = f(point)
        if out.size != 1:
            raise ContractViolation(f"gradient check needs a scalar function, got shape {out.shape}")
        if not np.isfinite(out.item()):
            raise GradCheckFailure(None, out.item())
        tape.backward(out)
    analytic = point.grad if point.grad is not None else np.zeros_like(x0)

    numeric = np.zeros_like(x0)
    for idx in np.ndindex(x0.shape):
        shifted = x0.copy()
        shifted[idx] = x0[idx] + eps
        f_plus = _evaluate(f, shifted, idx)
        shifted[idx] = x0[idx] - eps
        f_minus = _evaluate(f, shifted, idx)
        numeric[idx] = (f_plus - f_minus) / (2.0 * eps)

    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom)) if x0.size else 0.0

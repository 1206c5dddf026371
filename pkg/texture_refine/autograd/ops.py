"""Elementwise, reduction and shape operations.

Binary operations require identical shapes; python scalars are the only
implicit broadcast. Per-channel bias and scale have their own operations
(add_channel_bias, scale_channels) and channel replication is explicit
(expand_channels).
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from texture_refine.autograd.tensor import Tensor, as_tensor, make_result
from texture_refine.domain.errors import ContractViolation

Operand = Union[Tensor, np.ndarray, float, int]


def _is_scalar(value) -> bool:
    return isinstance(value, (int, float, np.floating, np.integer))


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ContractViolation(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# Binary arithmetic
# ---------------------------------------------------------------------------

def add(a: Operand, b: Operand) -> Tensor:
    if _is_scalar(b):
        a = as_tensor(a)
        return make_result(a.data + float(b), (a,), lambda g: (g,), "add_scalar")
    if _is_scalar(a):
        return add(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "add")
    return make_result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Operand, b: Operand) -> Tensor:
    if _is_scalar(b):
        return add(a, -float(b))
    if _is_scalar(a):
        b = as_tensor(b)
        return make_result(float(a) - b.data, (b,), lambda g: (-g,), "rsub_scalar")
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "sub")
    return make_result(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Operand, b: Operand) -> Tensor:
    if _is_scalar(b):
        a = as_tensor(a)
        k = float(b)
        return make_result(a.data * k, (a,), lambda g: (g * k,), "mul_scalar")
    if _is_scalar(a):
        return mul(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "mul")
    return make_result(
        a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul"
    )


def div(a: Operand, b: Operand) -> Tensor:
    if _is_scalar(b):
        return mul(a, 1.0 / float(b))
    if _is_scalar(a):
        b = as_tensor(b)
        k = float(a)
        out = k / b.data
        return make_result(out, (b,), lambda g: (-g * out / b.data,), "rdiv_scalar")
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "div")
    out = a.data / b.data
    return make_result(
        out, (a, b), lambda g: (g / b.data, -g * out / b.data), "div"
    )


def power(a: Operand, exponent: float) -> Tensor:
    a = as_tensor(a)
    p = float(exponent)
    return make_result(
        a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1.0),), "power"
    )


def square(a: Operand) -> Tensor:
    a = as_tensor(a)
    return make_result(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def matmul(a: Operand, b: Operand) -> Tensor:
    """Batched matrix product over the last two axes (batch axes must match)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]:
        raise ContractViolation(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ContractViolation(f"matmul: inner dimensions differ {a.shape} @ {b.shape}")

    def backward(g):
        return (
            np.matmul(g, np.swapaxes(b.data, -1, -2)),
            np.matmul(np.swapaxes(a.data, -1, -2), g),
        )

    return make_result(np.matmul(a.data, b.data), (a, b), backward, "matmul")


# ---------------------------------------------------------------------------
# Elementwise functions
# ---------------------------------------------------------------------------

def exp(a: Operand) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,), "exp")


def log(a: Operand) -> Tensor:
    a = as_tensor(a)
    return make_result(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a: Operand) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return make_result(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def absolute(a: Operand) -> Tensor:
    a = as_tensor(a)
    return make_result(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def tanh(a: Operand) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return make_result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a: Operand) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return make_result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a: Operand) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return make_result(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def softplus(a: Operand) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    slope = 0.5 * (1.0 + np.tanh(0.5 * x))
    return make_result(out, (a,), lambda g: (g * slope,), "softplus")


def clamp_min(a: Operand, floor: float) -> Tensor:
    """max(a, floor); the gradient is cut where the floor is active."""
    a = as_tensor(a)
    keep = a.data > floor
    out = np.where(keep, a.data, floor)
    return make_result(out, (a,), lambda g: (g * keep,), "clamp_min")


def norm(a: Operand) -> Tensor:
    """Euclidean norm of all elements; the gradient at zero is taken as zero."""
    a = as_tensor(a)
    value = float(np.sqrt(np.sum(a.data * a.data)))

    def backward(g):
        if value == 0.0:
            return (np.zeros_like(a.data),)
        return (g * a.data / value,)

    return make_result(np.array(value), (a,), backward, "norm")


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a: Operand, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    out = np.sum(a.data, axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_result(out, (a,), backward, "sum")


def mean(a: Operand, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return mul(sum(a, axis=axes, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# Shape operations
# ---------------------------------------------------------------------------

def reshape(a: Operand, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(tuple(shape))
    return make_result(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Operand, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = np.transpose(a.data, axes)
    return make_result(out, (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def index(a: Operand, key) -> Tensor:
    """Basic slicing; the gradient scatters back into a zero array."""
    a = as_tensor(a)
    out = np.array(a.data[key])

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return make_result(out, (a,), backward, "index")


def concat(tensors: Sequence[Operand], axis: int = 1) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    if not parts:
        raise ContractViolation("concat needs at least one tensor")
    ndim = parts[0].ndim
    ax = axis % ndim
    for t in parts[1:]:
        if t.ndim != ndim or any(
            t.shape[d] != parts[0].shape[d] for d in range(ndim) if d != ax
        ):
            raise ContractViolation(
                f"concat: shapes {[p.shape for p in parts]} disagree off axis {axis}"
            )
    bounds = np.cumsum([0] + [t.shape[ax] for t in parts])
    out = np.concatenate([t.data for t in parts], axis=ax)

    def backward(g):
        grads = []
        for i in range(len(parts)):
            sl = [slice(None)] * ndim
            sl[ax] = slice(int(bounds[i]), int(bounds[i + 1]))
            grads.append(g[tuple(sl)])
        return tuple(grads)

    return make_result(out, parts, backward, "concat")


def stack(tensors: Sequence[Operand]) -> Tensor:
    """Stack along a new leading axis."""
    parts = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, (1,) + t.shape) for t in parts]
    return concat(expanded, axis=0)


def expand_channels(a: Operand, channels: int) -> Tensor:
    """Repeat a single-channel (B,1,H,W) tensor to (B,channels,H,W)."""
    a = as_tensor(a)
    if a.ndim != 4 or a.shape[1] != 1:
        raise ContractViolation(f"expand_channels needs (B,1,H,W), got {a.shape}")
    out = np.repeat(a.data, channels, axis=1)
    return make_result(
        out, (a,), lambda g: (g.sum(axis=1, keepdims=True),), "expand_channels"
    )


def _channel_view(vec: np.ndarray, ndim: int) -> np.ndarray:
    return vec.reshape((1, -1) + (1,) * (ndim - 2))


def _check_channel_vector(x: Tensor, v: Tensor, op: str) -> None:
    if x.ndim < 2 or v.ndim != 1 or v.shape[0] != x.shape[1]:
        raise ContractViolation(f"{op}: vector {v.shape} does not match channels of {x.shape}")


def add_channel_bias(x: Operand, bias: Operand) -> Tensor:
    x, bias = as_tensor(x), as_tensor(bias)
    _check_channel_vector(x, bias, "add_channel_bias")
    reduce_axes = (0,) + tuple(range(2, x.ndim))
    out = x.data + _channel_view(bias.data, x.ndim)
    return make_result(
        out, (x, bias), lambda g: (g, g.sum(axis=reduce_axes)), "add_channel_bias"
    )


def scale_channels(x: Operand, scale: Operand) -> Tensor:
    x, scale = as_tensor(x), as_tensor(scale)
    _check_channel_vector(x, scale, "scale_channels")
    reduce_axes = (0,) + tuple(range(2, x.ndim))
    view = _channel_view(scale.data, x.ndim)

    def backward(g):
        return g * view, (g * x.data).sum(axis=reduce_axes)

    return make_result(x.data * view, (x, scale), backward, "scale_channels")


def where_mask(mask: np.ndarray, a: Operand, b: Operand) -> Tensor:
    """Select a where the constant boolean mask is set, b elsewhere."""
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "where_mask")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ContractViolation(f"where_mask: mask {mask.shape} vs operands {a.shape}")
    out = np.where(mask, a.data, b.data)
    return make_result(
        out, (a, b), lambda g: (g * mask, g * ~mask), "where_mask"
    )


def zeros(shape: Sequence[int]) -> Tensor:
    return Tensor(np.zeros(tuple(shape)))


def ones(shape: Sequence[int]) -> Tensor:
    return Tensor(np.ones(tuple(shape)))


def full_like(a: Tensor, value: float) -> Tensor:
    return Tensor(np.full(a.shape, float(value)))


def detach(a: Operand, stop: bool = True) -> Tensor:
    """Stop-gradient when ``stop`` is set, identity otherwise."""
    a = as_tensor(a)
    return a.detach() if stop else a


def optional_sum(terms: Sequence[Optional[Tensor]]) -> Tensor:
    present = [t for t in terms if t is not None]
    if not present:
        return Tensor(0.0)
    total = present[0]
    for term in present[1:]:
        total = add(total, term)
    return total

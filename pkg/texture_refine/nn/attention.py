"""Single-head scaled dot-product attention between feature maps."""

from __future__ import annotations

import math

from texture_refine.autograd import ops
from texture_refine.autograd.tensor import Tensor, as_tensor
from texture_refine.domain.errors import ContractViolation
from texture_refine.nn.functional import softmax

MAX_TOKENS = 4096


def _tokens(x: Tensor) -> Tensor:
    """(B, d, h, w) -> (B, h*w, d)."""
    b, d, h, w = x.shape
    return ops.transpose(ops.reshape(x, (b, d, h * w)), (0, 2, 1))


def attention_block(query: Tensor, key: Tensor, value: Tensor) -> Tensor:
    """softmax(Q K^T / sqrt(d)) V over flattened spatial tokens.

    query is (B, d, h_q, w_q); key and value are (B, d, h_k, w_k). The
    result is reshaped back onto the query grid.
    """
    query, key, value = as_tensor(query), as_tensor(key), as_tensor(value)
    for name, t in (("query", query), ("key", key), ("value", value)):
        if t.ndim != 4:
            raise ContractViolation(f"attention {name} must be (B,d,h,w), got {t.shape}")
    b, d, h_q, w_q = query.shape
    if key.shape[:2] != (b, d) or value.shape != key.shape:
        raise ContractViolation(
            f"attention feature mismatch: query {query.shape}, key {key.shape}, value {value.shape}"
        )
    if h_q * w_q > MAX_TOKENS or key.shape[2] * key.shape[3] > MAX_TOKENS:
        raise ContractViolation(
            f"attention token count exceeds {MAX_TOKENS}: query {h_q * w_q}, "
            f"key {key.shape[2] * key.shape[3]}"
        )

    q = _tokens(query)
    k = _tokens(key)
    v = _tokens(value)
    scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(d))
    weights = softmax(scores)
    out = ops.matmul(weights, v)
    return ops.reshape(ops.transpose(out, (0, 2, 1)), (b, d, h_q, w_q))


def attention_weights(query: Tensor, key: Tensor) -> Tensor:
    """The softmax matrix alone, (B, h_q*w_q, h_k*w_k)."""
    query, key = as_tensor(query), as_tensor(key)
    d = query.shape[1]
    scores = ops.mul(ops.matmul(_tokens(query), ops.transpose(_tokens(key), (0, 2, 1))), 1.0 / math.sqrt(d))
    return softmax(scores)

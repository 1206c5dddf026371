"""Base class for operations with hand-written backward rules."""

from __future__ import annotations

from typing import Any, Optional, Tuple

import numpy as np

from texture_refine.autograd.tensor import Tensor, as_tensor, make_result


class Context:
    """Scratch space shared between forward and backward of one call."""

    def __init__(self, needs_input_grad: Tuple[bool, ...]):
        self.needs_input_grad = needs_input_grad
        self.saved: Tuple[Any, ...] = ()

    def save_for_backward(self, *values: Any) -> None:
        self.saved = values


class Function:
    """Differentiable operation over numpy arrays.

    Subclasses implement ``forward(ctx, *arrays, **options)`` returning an
    array and ``backward(ctx, grad_output)`` returning one gradient (or
    None) per tensor input.
    """

    @staticmethod
    def forward(ctx: Context, *arrays: np.ndarray, **options) -> np.ndarray:
        raise NotImplementedError

    @staticmethod
    def backward(ctx: Context, grad_output: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs, **options) -> Tensor:
        tensors = tuple(as_tensor(x) for x in inputs)
        ctx = Context(tuple(t.requires_grad for t in tensors))
        out = cls.forward(ctx, *(t.data for t in tensors), **options)

        def backward(grad_output: np.ndarray):
            grads = cls.backward(ctx, grad_output)
            if not isinstance(grads, tuple):
                grads = (grads,)
            return grads

        return make_result(out, tensors, backward, cls.__name__)

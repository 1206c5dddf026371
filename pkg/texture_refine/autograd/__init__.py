"""Reverse-mode automatic differentiation over dense numpy arrays."""

from texture_refine.autograd.function import Context, Function
from texture_refine.autograd.gradcheck import finite_diff_check
from texture_refine.autograd.optim import Adam, AdamState, adam_step
from texture_refine.autograd.tensor import Tape, Tensor, active_tape, as_tensor, backward

__all__ = [
    "Adam",
    "AdamState",
    "Context",
    "Function",
    "Tape",
    "Tensor",
    "active_tape",
    "adam_step",
    "as_tensor",
    "backward",
    "finite_diff_check",
]

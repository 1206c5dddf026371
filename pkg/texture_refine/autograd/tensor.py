"""Dense tensors with define-by-run reverse-mode differentiation.

A Tape is opened for every training step. Operations executed while a
tape is active are recorded in execution order; backward() walks the
recording in reverse and accumulates gradients into the leaf tensors
(tensors that were not produced by a recorded operation).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from texture_refine.domain.errors import ContractViolation

MAX_RANK = 4

_local = threading.local()


def _tape_stack() -> List["Tape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def active_tape() -> Optional["Tape"]:
    """Return the innermost tape open on this thread, if any."""
    stack = _tape_stack()
    return stack[-1] if stack else None


@dataclass
class Node:
    """One recorded operation."""
    name: str
    inputs: Tuple["Tensor", ...]
    output: "Tensor"
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """Dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "tape_node", "name")

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > MAX_RANK:
            raise ContractViolation(f"tensor rank {arr.ndim} exceeds {MAX_RANK}")
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.tape_node: Optional[Node] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Arithmetic is delegated to autograd.ops so that every operator
    # goes through the same shape contract and the same recording path.

    def __add__(self, other):
        from texture_refine.autograd import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from texture_refine.autograd import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from texture_refine.autograd import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from texture_refine.autograd import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from texture_refine.autograd import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from texture_refine.autograd import ops
        return ops.div(other, self)

    def __neg__(self):
        from texture_refine.autograd import ops
        return ops.mul(self, -1.0)

    def __pow__(self, exponent: float):
        from texture_refine.autograd import ops
        return ops.power(self, exponent)

    def __matmul__(self, other):
        from texture_refine.autograd import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from texture_refine.autograd import ops
        return ops.index(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        from texture_refine.autograd import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from texture_refine.autograd import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from texture_refine.autograd import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from texture_refine.autograd import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes)


def as_tensor(value) -> Tensor:
    """Wrap constants (floats, arrays) in a non-differentiable Tensor."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


def make_result(
    data: np.ndarray,
    inputs: Sequence[Tensor],
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
    name: str,
) -> Tensor:
    """Wrap an operation's output and record it on the active tape."""
    tape = active_tape()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad)
    if needs_grad:
        tape.record(Node(name=name, inputs=tuple(inputs), output=out, backward=backward))
    return out


class Tape:
    """Ordered record of the operations of one forward pass."""

    def __init__(self):
        self.nodes: List[Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        else:
            raise RuntimeError("tapes must be closed in the order they were opened")

    def record(self, node: Node) -> None:
        node.output.tape_node = node
        self.nodes.append(node)

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into every reachable leaf's grad."""
        if loss.size != 1:
            raise ContractViolation(f"backward() needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            return

        produced = {id(node.output) for node in self.nodes}
        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: Dict[int, Tensor] = {}
        if id(loss) not in produced:
            leaves[id(loss)] = loss

        for node in reversed(self.nodes):
            grad_out = grads.pop(id(node.output), None)
            if grad_out is None:
                continue
            input_grads = node.backward(grad_out)
            for tensor, grad in zip(node.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if grad.shape != tensor.shape:
                    raise RuntimeError(
                        f"{node.name} produced a gradient of shape {grad.shape} "
                        f"for an input of shape {tensor.shape}"
                    )
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = grad
                if key not in produced:
                    leaves[key] = tensor

        for key, tensor in leaves.items():
            grad = grads.get(key)
            if grad is None:
                continue
            tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad


def backward(loss: Tensor) -> None:
    """Run reverse-mode differentiation on the active tape."""
    tape = active_tape()
    if tape is None:
        raise ContractViolation("backward() called without an active tape")
    tape.backward(loss)

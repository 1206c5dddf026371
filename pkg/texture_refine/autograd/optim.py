"""Adam optimizer with bias-corrected moments."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from texture_refine.autograd.tensor import Tensor
from texture_refine.domain.errors import ContractViolation


@dataclass
class AdamState:
    """Per-parameter moments plus hyperparameters."""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.step < 0:
            raise ContractViolation("Adam step counter must be non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ContractViolation("Adam betas must lie in [0, 1)")


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, Optional[np.ndarray]],
    state: AdamState,
) -> AdamState:
    """Update ``params`` in place and advance ``state`` by one step.

    Parameters whose gradient is None are left untouched (they did not
    take part in this step's graph).
    """
    for name, param in params.items():
        grad = grads.get(name)
        if grad is not None and grad.shape != param.shape:
            raise ContractViolation(
                f"gradient for '{name}' has shape {grad.shape}, parameter has {param.shape}"
            )
        if name in state.m and state.m[name].shape != param.shape:
            raise ContractViolation(f"moment shape mismatch for '{name}'")

    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    step_size = state.lr / bc1

    for name, param in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)

        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)

        denom = np.sqrt(v / bc2) + state.eps
        param -= step_size * m / denom

    return state


class Adam:
    """Adam over a named set of parameter tensors."""

    def __init__(
        self,
        parameters: Mapping[str, Tensor],
        lr: float = 1e-3,
        betas=(0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.parameters = dict(parameters)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)
        self.logger = logging.getLogger(__name__)

    def zero_grad(self) -> None:
        for p in self.parameters.values():
            p.grad = None

    def step(self) -> None:
        adam_step(
            {name: p.data for name, p in self.parameters.items()},
            {name: p.grad for name, p in self.parameters.items()},
            self.state,
        )

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Flatten moments and the step counter for checkpointing."""
        arrays: Dict[str, np.ndarray] = {"step": np.array(float(self.state.step))}
        for name in sorted(self.state.m):
            arrays[f"m/{name}"] = self.state.m[name]
            arrays[f"v/{name}"] = self.state.v[name]
        return arrays

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        self.state.step = int(arrays["step"])
        self.state.m.clear()
        self.state.v.clear()
        for key, value in arrays.items():
            if key.startswith("m/"):
                self.state.m[key[2:]] = np.array(value, dtype=np.float64)
            elif key.startswith("v/"):
                self.state.v[key[2:]] = np.array(value, dtype=np.float64)
        self.logger.debug(f"Restored Adam state at step {self.state.step}")

"""Module/Parameter containers and the layers the networks are built from."""

from __future__ import annotations

import math
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from texture_refine.autograd import ops
from texture_refine.autograd.tensor import Tensor
from texture_refine.domain.errors import CheckpointError
from texture_refine.nn import functional as F
from texture_refine.nn.attention import attention_block
from texture_refine.nn.deformable import (
    KERNEL,
    deformable_conv2d,
    flow_to_offsets,
    replication_weights,
)


class Parameter(Tensor):
    """A trainable tensor."""

    def __init__(self, data, requires_grad: bool = True):
        super().__init__(data, requires_grad=requires_grad)


class Module:
    """Base class: parameters, buffers and submodules found by attribute."""

    def __init__(self):
        self.training = True
        self.buffers: Dict[str, np.ndarray] = {}

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if name == "buffers":
                continue
            if isinstance(value, (Parameter, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            else:
                yield from value.named_parameters(prefix=f"{full}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, buf in self.buffers.items():
            yield f"{prefix}{name}", buf
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value.named_buffers(prefix=f"{prefix}{name}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def freeze(self) -> "Module":
        for p in self.parameters():
            p.requires_grad = False
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        for name, buf in self.named_buffers():
            state[f"{name}"] = buf
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        own = self.state_dict()
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise CheckpointError(f"state mismatch; missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, p in self.named_parameters():
            _copy_into(p.data, state[name], name)
        for name, buf in self.named_buffers():
            _copy_into(buf, state[name], name)


def _copy_into(target: np.ndarray, source: np.ndarray, name: str) -> None:
    source = np.asarray(source)
    if source.shape != target.shape:
        raise CheckpointError(f"'{name}' has shape {source.shape}, expected {target.shape}")
    target[...] = source


def he_normal(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)


class Conv2d(Module):
    """Stride-1 convolution with 'same' zero padding."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 kernel_size: int = 3, bias: bool = True):
        super().__init__()
        self.padding = kernel_size // 2
        self.weight = Parameter(he_normal(rng, (out_channels, in_channels, kernel_size, kernel_size)))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, padding=self.padding)


class BatchNorm2d(Module):

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.buffers["running_mean"] = np.zeros(channels)
        self.buffers["running_var"] = np.ones(channels)

    def forward(self, x: Tensor) -> Tensor:
        return F.batchnorm2d(
            x, self.gamma, self.beta,
            self.buffers["running_mean"], self.buffers["running_var"],
            training=self.training, momentum=self.momentum, eps=self.eps,
        )


class ConvBNReLU(Module):

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, rng)
        self.bn = BatchNorm2d(out_channels)

    def forward(self, x: Tensor) -> Tensor:
        return F.relu(self.bn(self.conv(x)))


class DoubleConv(Module):
    """Two conv-BN-ReLU units; one "convolution layer" of the encoder-decoders."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.first = ConvBNReLU(in_channels, out_channels, rng)
        self.second = ConvBNReLU(out_channels, out_channels, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.second(self.first(x))


class DeformConvBNReLU(Module):
    """Deformable 3x3 convolution followed by BN and ReLU."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Parameter(he_normal(rng, (out_channels, in_channels, KERNEL, KERNEL)))
        self.bias = Parameter(np.zeros(out_channels))
        self.bn = BatchNorm2d(out_channels)

    def forward(self, x: Tensor, offsets: Tensor) -> Tensor:
        return F.relu(self.bn(deformable_conv2d(x, offsets, self.weight, self.bias)))


class OffsetConv(Module):
    """flow -> 18-channel offset field, initialized to copy the raw flow offset to every tap."""

    def __init__(self):
        super().__init__()
        weight, bias = replication_weights()
        self.weight = Parameter(weight)
        self.bias = Parameter(bias)

    def forward(self, flow: Tensor, in_size: Tuple[int, int]) -> Tensor:
        return flow_to_offsets(flow, in_size, self.weight, self.bias)


class AttentionBlock(Module):
    """Conv-embedded attention with an output projection and a feed-forward step.

    With ``pool`` set, queries, keys and values are average pooled 2x before
    attending and the result is upsampled back, which keeps the token
    count of the finest scale within budget.
    """

    def __init__(self, width: int, rng: np.random.Generator, ffn_factor: int = 4):
        super().__init__()
        self.query_proj = Conv2d(width, width, rng)
        self.key_proj = Conv2d(width, width, rng)
        self.value_proj = Conv2d(width, width, rng)
        self.out_proj = Conv2d(width, width, rng, kernel_size=1)
        self.ffn_in = Conv2d(width, ffn_factor * width, rng, kernel_size=1)
        self.ffn_out = Conv2d(ffn_factor * width, width, rng, kernel_size=1)

    def forward(self, query: Tensor, key: Tensor, value: Tensor, pool: bool = False) -> Tensor:
        q = self.query_proj(query)
        k = self.key_proj(key)
        v = self.value_proj(value)
        if pool:
            q, k, v = F.downsample2x(q), F.downsample2x(k), F.downsample2x(v)
        attended = self.out_proj(attention_block(q, k, v))
        out = ops.add(attended, self.ffn_out(F.relu(self.ffn_in(attended))))
        if pool:
            out = F.upsample2x(out)
        return out


def count_parameters(module: Optional[Module]) -> int:
    return 0 if module is None else module.num_parameters()

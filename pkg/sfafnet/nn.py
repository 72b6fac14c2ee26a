"""
Layer containers: parameter registration, naming, and the basic layers
(convolution, fully connected, channel-wise layer norm).
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from typing import Any, Iterator, Optional

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError
from .tensor import Parameter, Tensor, get_default_dtype

logger = logging.getLogger(__name__)


def uniform_fan_in(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initial values."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(get_default_dtype())


class Module:
    """Base class: tracks parameters and sub-modules in assignment order."""

    def __init__(self) -> None:
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError(f"{type(self).__name__}.forward")

    # ------------------------------------------------------------------
    # Parameter access
    # ------------------------------------------------------------------

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        """Yield (dotted name, parameter) pairs in a stable order."""
        for name, param in self._parameters.items():
            yield f"{prefix}{name}", param
        for name, module in self._modules.items():
            yield from module.named_parameters(prefix=f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def name_parameters(self) -> None:
        """Stamp each parameter with its dotted name (for diagnostics)."""
        for name, param in self.named_parameters():
            param.name = name

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data) for name, p in self.named_parameters())

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """
        Copy arrays into the parameters of the same names.

        Raises:
            ConfigError: Missing or unexpected names.
            DimensionError: A stored array has the wrong shape.
        """
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise ConfigError(
                f"state mismatch: missing={sorted(missing)[:5]}, unexpected={sorted(unexpected)[:5]}"
            )
        for name, param in own.items():
            array = state[name]
            if array.shape != param.shape:
                raise DimensionError(f"{name}: stored shape {array.shape} != {param.shape}")
            param.data = np.array(array, dtype=param.dtype, copy=True)


class ModuleList(Module):
    """Ordered list of sub-modules named "0", "1", ..."""

    def __init__(self, modules: Optional[list[Module]] = None):
        super().__init__()
        self._items: list[Module] = []
        for module in modules or []:
            self.append(module)

    def append(self, module: Module) -> None:
        self._modules[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]


# ----------------------------------------------------------------------
# Layers
# ----------------------------------------------------------------------


class Conv2d(Module):
    """Square-kernel convolution with "same" padding."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        groups: int = 1,
        padding_mode: str = "zero",
        zero_init: bool = False,
    ):
        super().__init__()
        if in_channels % groups or out_channels % groups:
            raise ConfigError(
                f"groups={groups} must divide in_channels={in_channels} and out_channels={out_channels}"
            )
        self.stride = stride
        self.groups = groups
        self.padding_mode = padding_mode
        shape = (out_channels, in_channels // groups, kernel_size, kernel_size)
        fan_in = shape[1] * kernel_size * kernel_size
        if zero_init:
            self.weight = Parameter(np.zeros(shape, dtype=get_default_dtype()))
            self.bias = Parameter(np.zeros(out_channels, dtype=get_default_dtype()))
        else:
            self.weight = Parameter(uniform_fan_in(shape, fan_in, rng))
            self.bias = Parameter(uniform_fan_in((out_channels,), fan_in, rng))

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(
            x,
            self.weight,
            self.bias,
            stride=self.stride,
            padding_mode=self.padding_mode,
            groups=self.groups,
        )


class Linear(Module):
    """Fully connected layer on N x F vectors."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Parameter(uniform_fan_in((in_features, out_features), in_features, rng))
        self.bias = Parameter(uniform_fan_in((out_features,), in_features, rng))

    def forward(self, x: Tensor) -> Tensor:
        return ops.matmul(x, self.weight) + self.bias


class LayerNorm(Module):
    """Channel-wise layer norm with learnable affine (ones / zeros)."""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        dtype = get_default_dtype()
        self.eps = eps
        self.weight = Parameter(np.ones(channels, dtype=dtype))
        self.bias = Parameter(np.zeros(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.weight, self.bias, self.eps)

"""
Spatial-domain building blocks: Simple Gate, simplified channel attention,
SCABlock and NAFBlock.
"""

from __future__ import annotations

import logging

import numpy as np

from . import ops
from .errors import DimensionError
from .nn import Conv2d, LayerNorm, Module
from .tensor import Tensor

logger = logging.getLogger(__name__)


def simple_gate(x: Tensor) -> Tensor:
    """Split channels in half and multiply the halves (N x 2C -> N x C)."""
    if x.shape[1] % 2:
        raise DimensionError(f"simple_gate needs an even channel count, got {x.shape[1]}")
    first, second = ops.split(x, 2, axis=1)
    return first * second


def sca(x: Tensor, conv: Conv2d) -> Tensor:
    """Scale each channel by a 1x1 convolution of its global average."""
    return x * conv(ops.pool_stats(x, "gap"))


class SCABlock(Module):
    """
    1x1 conv (C->2C), depthwise 3x3, Simple Gate (->C), SCA, 1x1 projection.

    Args:
        channels: Input and output width C.
        rng: Initialization generator.
        zero_proj: Start the final projection at zero (residual identity).
    """

    def __init__(self, channels: int, rng: np.random.Generator, zero_proj: bool = False):
        super().__init__()
        wide = 2 * channels
        self.expand = Conv2d(channels, wide, 1, rng)
        self.depthwise = Conv2d(wide, wide, 3, rng, groups=wide)
        self.attention = Conv2d(channels, channels, 1, rng)
        self.project = Conv2d(channels, channels, 1, rng, zero_init=zero_proj)

    def forward(self, x: Tensor) -> Tensor:
        gated = simple_gate(self.depthwise(self.expand(x)))
        return self.project(sca(gated, self.attention))


class NAFBlock(Module):
    """X1 = SCABlock(LN(X)) + X; out = X1 + FFN(LN(X1)) with a gated FFN."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.norm1 = LayerNorm(channels)
        self.spatial = SCABlock(channels, rng, zero_proj=True)
        self.norm2 = LayerNorm(channels)
        self.ffn_expand = Conv2d(channels, 2 * channels, 1, rng)
        self.ffn_project = Conv2d(channels, channels, 1, rng, zero_init=True)
        logger.debug(f"NAFBlock({channels}): both residual branches start at zero")

    def forward(self, x: Tensor) -> Tensor:
        x1 = self.spatial(self.norm1(x)) + x
        return x1 + self.ffn_project(simple_gate(self.ffn_expand(self.norm2(x1))))

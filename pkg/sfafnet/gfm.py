"""
Gated fusion module: GATE re-weighting of the spatial, low- and
high-frequency streams, pairwise cross-attention fusion, and adaptive
three-way weighting of the fused pairs.
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from . import ops
from .blocks import simple_gate
from .errors import ConfigError, DimensionError
from .nn import Conv2d, LayerNorm, Linear, Module
from .tensor import Tensor

logger = logging.getLogger(__name__)


def _require_same_shape(*tensors: Tensor) -> None:
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"inputs must share one shape, got {sorted(shapes)}")


class GateBranch(Module):
    """FC (C->C/2), Simple Gate (->C/4), FC (C/4->C), Sigmoid."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.squeeze = Linear(channels, channels // 2, rng)
        self.excite = Linear(channels // 4, channels, rng)

    def forward(self, stat: Tensor) -> Tensor:
        return ops.sigmoid(self.excite(simple_gate(self.squeeze(stat))))


class Gate(Module):
    """Average of a mean-pool branch and a std-pool branch, in (0, 1)^C."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        if channels % 4:
            raise ConfigError(f"GATE needs channels divisible by 4, got {channels}")
        self.mean_branch = GateBranch(channels, rng)
        self.std_branch = GateBranch(channels, rng)

    def coefficients(self, x: Tensor) -> Tensor:
        """
        Per-channel weights, N x C, strictly inside (0, 1).

        Saturated branches round to exactly 0 or 1 in float32, so the
        average is clamped to the nearest representable interior values.
        """
        n, c = x.shape[:2]
        mean_coeff = self.mean_branch(ops.pool_stats(x, "gap").reshape(n, c))
        std_coeff = self.std_branch(ops.pool_stats(x, "gsp").reshape(n, c))
        info = np.finfo(x.dtype)
        return ops.clip((mean_coeff + std_coeff) * 0.5, float(info.tiny), 1.0 - float(info.epsneg))

    def forward(self, x: Tensor) -> Tensor:
        n, c = x.shape[:2]
        return x * self.coefficients(x).reshape(n, c, 1, 1)


class CrossAttention(Module):
    """
    Channel-wise cross attention between two streams.

    S = q(LN(a)) k(LN(b))^T / sqrt(H*W) is a C x C similarity per sample;
    the output is a + b + softmax(S^T) v_a + softmax(S) v_b.
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.norm_a = LayerNorm(channels)
        self.norm_b = LayerNorm(channels)
        self.query = Conv2d(channels, channels, 1, rng)
        self.key = Conv2d(channels, channels, 1, rng)
        self.value_a = Conv2d(channels, channels, 1, rng)
        self.value_b = Conv2d(channels, channels, 1, rng)

    def forward(self, a: Tensor, b: Tensor) -> Tensor:
        _require_same_shape(a, b)
        n, c, height, width = a.shape
        length = height * width
        q = self.query(self.norm_a(a)).reshape(n, c, length)
        k = self.key(self.norm_b(b)).reshape(n, c, length)
        scores = ops.matmul(q, k.transpose(0, 2, 1)) * (1.0 / np.sqrt(length))
        v_a = self.value_a(a).reshape(n, c, length)
        v_b = self.value_b(b).reshape(n, c, length)
        a_to_b = ops.matmul(ops.softmax(scores.transpose(0, 2, 1), axis=-1), v_a)
        b_to_a = ops.matmul(ops.softmax(scores, axis=-1), v_b)
        return a + b + (a_to_b + b_to_a).reshape(n, c, height, width)


class AdaptiveFusion(Module):
    """Per-position softmax weights over three inputs, then a 1x1 projection."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.weight_proj = Conv2d(3 * channels, 3, 1, rng)
        self.proj = Conv2d(channels, channels, 1, rng)

    def fusion_weights(self, x_sl: Tensor, x_sh: Tensor, x_lh: Tensor) -> Tensor:
        """N x 3 x H x W weights summing to one at every position."""
        _require_same_shape(x_sl, x_sh, x_lh)
        logits = self.weight_proj(ops.concat([x_sl, x_sh, x_lh], axis=1))
        return ops.softmax(logits, axis=1)

    def forward(self, x_sl: Tensor, x_sh: Tensor, x_lh: Tensor) -> Tensor:
        w_sl, w_sh, w_lh = ops.split(self.fusion_weights(x_sl, x_sh, x_lh), 3, axis=1)
        return self.proj(x_sl * w_sl + x_sh * w_sh + x_lh * w_lh)


class GFM(Module):
    """
    Gate each stream, cross-attend the three unordered pairs, fuse adaptively.

    Args:
        channels: Stream width C.
        rng: Initialization generator.
        use_gate: When False, streams enter the cross attention unweighted.
    """

    def __init__(self, channels: int, rng: np.random.Generator, use_gate: bool = True):
        super().__init__()
        self.use_gate = use_gate
        if use_gate:
            self.gate_s = Gate(channels, rng)
            self.gate_l = Gate(channels, rng)
            self.gate_h = Gate(channels, rng)
        self.cam_sl = CrossAttention(channels, rng)
        self.cam_sh = CrossAttention(channels, rng)
        self.cam_lh = CrossAttention(channels, rng)
        self.fuse = AdaptiveFusion(channels, rng)
        self.captured: Optional[dict[str, np.ndarray]] = None

    def forward(self, x_s: Tensor, x_l: Tensor, x_h: Tensor) -> Tensor:
        _require_same_shape(x_s, x_l, x_h)
        if self.use_gate:
            g_s, g_l, g_h = self.gate_s(x_s), self.gate_l(x_l), self.gate_h(x_h)
        else:
            g_s, g_l, g_h = x_s, x_l, x_h
        x_sl = self.cam_sl(g_s, g_l)
        x_sh = self.cam_sh(g_s, g_h)
        x_lh = self.cam_lh(g_l, g_h)
        fused = self.fuse(x_sl, x_sh, x_lh)
        if self.captured is not None:
            for name, t in (
                ("gated_s", g_s), ("gated_l", g_l), ("gated_h", g_h),
                ("cam_sl", x_sl), ("cam_sh", x_sh), ("cam_lh", x_lh), ("fused", fused),
            ):
                self.captured[name] = t.data.copy()
        return fused

"""
Frequency-domain dynamic generation module.

Learns one k x k low-pass kernel per row group of channels from the input
itself, derives the complementary high-pass kernels, and splits features
into low- and high-frequency parts. Also hosts the numerical certificate
that repeated application of a positive row-stochastic filter removes all
high-frequency content.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ops
from .errors import ConfigError, ContractError, DegenerateError, DimensionError
from .nn import Conv2d, Module
from .tensor import Tensor, get_default_dtype

logger = logging.getLogger(__name__)

# Tolerance on "entries sum to one" for a valid low-pass kernel.
SUM_TOLERANCE = 1e-5


def identity_kernel(k: int, dtype=np.float64) -> np.ndarray:
    """k x k kernel with 1 at the centre and 0 elsewhere."""
    kernel = np.zeros((k, k), dtype=dtype)
    kernel[k // 2, k // 2] = 1.0
    return kernel


def check_lowpass(low: np.ndarray, tol: float = SUM_TOLERANCE) -> None:
    """
    Raise ContractError unless every trailing k x k kernel is nonnegative
    with unit sum.
    """
    low = np.asarray(low)
    if low.ndim < 2 or low.shape[-1] != low.shape[-2]:
        raise ContractError(f"low-pass kernels must be square, got shape {low.shape}")
    if (low < 0).any():
        raise ContractError(f"low-pass kernel has a negative entry (min {low.min():.3g})")
    sums = low.sum(axis=(-2, -1))
    worst = float(np.abs(sums - 1.0).max())
    if worst > tol:
        raise ContractError(f"low-pass kernel entries must sum to 1, off by {worst:.3g}")


def high_pass_from_low(low: np.ndarray) -> np.ndarray:
    """
    High-pass complement: identity kernel minus the low-pass kernel.

    Raises:
        ContractError: ``low`` is not a valid low-pass kernel.
    """
    check_lowpass(low)
    low = np.asarray(low)
    return identity_kernel(low.shape[-1], low.dtype) - low


@dataclass
class FilterBank:
    """
    Low-pass kernels and their high-pass complements.

    ``low``/``high`` are (N, r, k, k) for per-sample banks or (r, k, k)
    for a bank shared across the batch.
    """

    low: Tensor
    high: Tensor

    @classmethod
    def from_low(cls, low: Tensor) -> "FilterBank":
        k = low.shape[-1]
        identity = Tensor(identity_kernel(k, low.dtype))
        return cls(low=low, high=identity - low)

    @property
    def rows(self) -> int:
        return self.low.shape[-3]

    @property
    def kernel_size(self) -> int:
        return self.low.shape[-1]

    @property
    def shared(self) -> bool:
        return self.low.ndim == 3

    def validate(self, tol: float = SUM_TOLERANCE) -> None:
        """Check the low-pass conditions and exact complementarity."""
        check_lowpass(self.low.data, tol)
        total = self.low.data + self.high.data
        expected = np.broadcast_to(identity_kernel(self.kernel_size, total.dtype), total.shape)
        if not np.array_equal(total, expected):
            raise ContractError("low + high does not equal the identity kernel")


def fixed_gaussian_bank(sigma: float, r: int, k: int) -> FilterBank:
    """All r low-pass kernels set to the same normalized k x k Gaussian."""
    if sigma <= 0:
        raise ContractError(f"sigma must be > 0, got {sigma}")
    if k < 1 or k % 2 == 0:
        raise ConfigError(f"kernel size must be odd, got {k}")
    offsets = np.arange(k, dtype=np.float64) - k // 2
    squared = offsets[:, None] ** 2 + offsets[None, :] ** 2
    kernel = np.exp(-squared / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    low = np.broadcast_to(kernel, (r, k, k)).astype(get_default_dtype())
    return FilterBank.from_low(Tensor(low))


def decompose(f3: Tensor, bank: FilterBank) -> tuple[Tensor, Tensor]:
    """
    Split ``f3`` into low- and high-frequency parts.

    Each channel in row group i is filtered (reflect padding, stride 1) with
    low[i] and with high[i].

    Raises:
        DimensionError: The bank's row count does not divide the channels.
    """
    if f3.shape[1] % bank.rows:
        raise DimensionError(f"{bank.rows} filter rows do not divide {f3.shape[1]} channels")
    x_low = ops.dynamic_filter(f3, bank.low, padding_mode="reflect")
    x_high = ops.dynamic_filter(f3, bank.high, padding_mode="reflect")
    return x_low, x_high


class FDGM(Module):
    """
    Expand (1x1, C->3C), depthwise 3x3, split into F1, F2, F3; F1 and F2
    generate per-row low-pass kernels, which are applied to F3.

    Args:
        channels: Feature width C.
        rows: Row groups r (must divide C).
        kernel_size: Odd filter size k.
        rng: Initialization generator.
        gaussian_sigma: When set, replace learned kernels with a fixed
            Gaussian bank (ablation baseline).
    """

    def __init__(
        self,
        channels: int,
        rows: int,
        kernel_size: int,
        rng: np.random.Generator,
        gaussian_sigma: Optional[float] = None,
    ):
        super().__init__()
        if rows < 1 or channels % rows:
            raise ConfigError(f"rows={rows} must divide channels={channels}")
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ConfigError(f"kernel size must be odd, got {kernel_size}")
        self.rows = rows
        self.kernel_size = kernel_size
        self.gaussian_sigma = gaussian_sigma
        self.expand = Conv2d(channels, 3 * channels, 1, rng)
        self.depthwise = Conv2d(3 * channels, 3 * channels, 3, rng, groups=3 * channels)
        self._fixed_bank = (
            fixed_gaussian_bank(gaussian_sigma, rows, kernel_size) if gaussian_sigma else None
        )

    def generate_filters(self, f: Tensor) -> tuple[FilterBank, Tensor]:
        """
        Build the per-sample filter bank from ``f`` and return it with F3.

        Logits for row group g are the k x k adaptive average pool of F1's
        group (averaged over its channels) scaled by one plus the global
        average of F2's group.

        Raises:
            DimensionError: H or W smaller than the kernel size.
        """
        n, channels, height, width = f.shape
        k, r = self.kernel_size, self.rows
        if height < k or width < k:
            raise DimensionError(f"FDGM needs H, W >= {k}, got {height}x{width}")
        f1, f2, f3 = ops.split(self.depthwise(self.expand(f)), 3, axis=1)
        if self._fixed_bank is not None:
            return self._fixed_bank, f3
        group = channels // r
        pooled = ops.adaptive_avg_pool2d(f1.reshape(n, r, group, height, width), k, k)
        template = pooled.mean(axis=2).reshape(n, r, k * k)
        modulation = f2.reshape(n, r, group * height * width).mean(axis=2, keepdims=True)
        logits = template * (modulation + 1.0)
        low = ops.softmax(logits, axis=-1).reshape(n, r, k, k)
        return FilterBank.from_low(low), f3

    def forward(self, f: Tensor) -> tuple[Tensor, Tensor]:
        bank, f3 = self.generate_filters(f)
        return decompose(f3, bank)


# ----------------------------------------------------------------------
# Low-pass certificate
# ----------------------------------------------------------------------


def high_frequency(v: np.ndarray) -> np.ndarray:
    """Remove the DC component: (E - M/n) v."""
    return v - v.mean()


def _check_row_stochastic(w: np.ndarray, tol: float = 1e-6) -> None:
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ContractError(f"W must be square, got shape {w.shape}")
    if (w < 0).any():
        raise ContractError("W has negative entries")
    worst = float(np.abs(w.sum(axis=1) - 1.0).max())
    if worst > tol:
        raise ContractError(f"W rows must sum to 1, off by {worst:.3g}")


def lowpass_trace(w: np.ndarray, m: np.ndarray, max_p: int) -> np.ndarray:
    """
    High-frequency ratio ||HF[W^p m]|| / ||W^p m|| for p = 1..max_p.

    The iterate is renormalized every step, which leaves the ratio unchanged.

    Raises:
        ContractError: W not row-stochastic, m zero, or max_p < 1.
        DegenerateError: W^p m vanishes numerically.
    """
    w = np.asarray(w, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64).reshape(-1)
    _check_row_stochastic(w)
    if m.shape[0] != w.shape[0]:
        raise ContractError(f"m has length {m.shape[0]}, W is {w.shape[0]}x{w.shape[0]}")
    norm = np.linalg.norm(m)
    if norm == 0:
        raise ContractError("m must be nonzero")
    if max_p < 1:
        raise ContractError(f"max_p must be >= 1, got {max_p}")
    v = m / norm
    ratios = np.empty(max_p)
    for p in range(max_p):
        v = w @ v
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            raise DegenerateError(f"W^{p + 1} m is numerically zero")
        v = v / norm
        ratios[p] = np.linalg.norm(high_frequency(v))
    return ratios


def verify_lowpass(w: np.ndarray, m: np.ndarray, p: int) -> float:
    """Ratio of high-frequency energy left after p applications of W."""
    return float(lowpass_trace(w, m, p)[-1])


def random_row_softmax(n: int, rng: np.random.Generator) -> np.ndarray:
    """Row-wise softmax of an n x n standard normal matrix."""
    logits = rng.standard_normal((n, n))
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


@dataclass
class LowpassTrial:
    trial: int
    ratios: np.ndarray
    label: str = "softmax"

    @property
    def final(self) -> float:
        return float(self.ratios[-1])


def certify_lowpass(k: int, trials: int, max_p: int, seed: int = 0) -> list[LowpassTrial]:
    """
    Run the low-pass certificate on ``trials`` random row-softmax matrices of
    size k^2 x k^2 with random unit vectors, plus the identity-matrix
    counterexample (labelled "identity", trial -1).
    """
    n = k * k
    results = []
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        w = random_row_softmax(n, rng)
        m = rng.standard_normal(n)
        results.append(LowpassTrial(trial, lowpass_trace(w, m / np.linalg.norm(m), max_p)))
    rng = np.random.default_rng([seed, trials])
    m = rng.standard_normal(n)
    results.append(LowpassTrial(-1, lowpass_trace(np.eye(n), m, max_p), label="identity"))
    passed = sum(r.final < 1e-3 for r in results if r.label == "softmax")
    logger.info(f"Low-pass certificate k={k}: {passed}/{trials} trials below 1e-3 at p={max_p}")
    return results

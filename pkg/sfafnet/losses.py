"""
Multi-scale training loss: Charbonnier, Laplacian edge and Fourier L1 terms
summed over the four network outputs.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from typing import Any, Optional, Sequence

import numpy as np

from . import ops
from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor

logger = logging.getLogger(__name__)

OUTPUT_COUNT = 4

LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass
class LossConfig:
    eps: float = 0.001
    lambda_freq: float = 0.1
    delta_edge: float = 0.05

    RECORD_PREFIX = "loss."

    def validate(self) -> None:
        for name, value in asdict(self).items():
            if value < 0:
                raise ConfigError(f"{name} must be nonnegative, got {value}")
        if self.eps == 0:
            raise ConfigError("eps must be > 0")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_records(self) -> dict[str, np.ndarray]:
        """Checkpoint records ``loss.<field>`` holding float64 scalars."""
        return {f"{self.RECORD_PREFIX}{name}": np.array(value, dtype=np.float64)
                for name, value in asdict(self).items()}

    @classmethod
    def from_records(cls, records: dict[str, np.ndarray]) -> Optional["LossConfig"]:
        """Rebuild from checkpoint records, or None when the checkpoint has none."""
        values = {
            name[len(cls.RECORD_PREFIX):]: float(array)
            for name, array in records.items()
            if name.startswith(cls.RECORD_PREFIX)
        }
        if not values:
            return None
        known = {f.name for f in fields(cls)}
        if set(values) != known:
            raise ContractError(f"checkpoint loss settings {sorted(values)} do not match {sorted(known)}")
        config = cls(**values)
        config.validate()
        return config


def _check_pair(pred: Tensor, target: Tensor) -> None:
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ in shape")


def charbonnier(pred: Tensor, target: Tensor, eps: float = 0.001) -> Tensor:
    """Mean over pixels of sqrt(diff^2 + eps^2)."""
    _check_pair(pred, target)
    diff = pred - target
    return ops.sqrt(diff * diff + eps * eps).mean()


def laplacian(x: Tensor) -> Tensor:
    """4-neighbour discrete Laplacian per channel, reflect padding."""
    channels = x.shape[1]
    kernel = np.broadcast_to(LAPLACIAN, (channels, 1, 3, 3)).astype(x.dtype)
    return ops.conv2d(x, Tensor(kernel), padding_mode="reflect", groups=channels)


def edge_loss(pred: Tensor, target: Tensor, eps: float = 0.001) -> Tensor:
    _check_pair(pred, target)
    return charbonnier(laplacian(pred), laplacian(target), eps)


def freq_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference of the real and imaginary 2-D DFT parts."""
    _check_pair(pred, target)
    return ops.spectrum2d(pred - target).abs().mean()


def composite_loss(
    outputs: Sequence[Tensor], targets: Sequence[Tensor], cfg: LossConfig
) -> tuple[Tensor, dict[str, float]]:
    """
    Sum over scales of charbonnier + delta * edge + lambda * freq.

    Returns:
        The scalar loss and a per-term breakdown (summed over scales).

    Raises:
        ContractError: Not exactly four outputs and four targets.
        DimensionError: A scale's output and target differ in shape.
    """
    if len(outputs) != OUTPUT_COUNT or len(targets) != OUTPUT_COUNT:
        raise ContractError(
            f"expected {OUTPUT_COUNT} outputs and targets, got {len(outputs)} and {len(targets)}"
        )
    total = None
    breakdown = {"loss_char": 0.0, "loss_edge": 0.0, "loss_freq": 0.0}
    for pred, target in zip(outputs, targets):
        l_char = charbonnier(pred, target, cfg.eps)
        l_edge = edge_loss(pred, target, cfg.eps)
        l_freq = freq_loss(pred, target)
        term = l_char + l_edge * cfg.delta_edge + l_freq * cfg.lambda_freq
        total = term if total is None else total + term
        breakdown["loss_char"] += l_char.item()
        breakdown["loss_edge"] += l_edge.item()
        breakdown["loss_freq"] += l_freq.item()
    breakdown["loss_total"] = total.item()
    return total, breakdown


def total_loss(outputs: Sequence[Tensor], targets: Sequence[Tensor], cfg: LossConfig) -> Tensor:
    loss, _ = composite_loss(outputs, targets, cfg)
    return loss

"""
Training loop: seeded batch sampling, multi-scale loss, Adam with a
cosine-annealed learning rate, periodic validation and checkpointing.

Every random draw for step ``s`` comes from a generator seeded with
(seed, s), so a run resumed from a checkpoint at step s continues exactly
as the unbroken run would have.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from . import checkpoint
from .data import ImagePair, augment, extract_patches, target_pyramid
from .errors import ConfigError, ContractError, DimensionError, NonFiniteError
from .losses import LossConfig, composite_loss
from .metrics import psnr
from .network import SIZE_MULTIPLE, SFAFNet, restore
from .tensor import Graph, Tensor

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["step", "lr", "loss_total", "loss_char", "loss_edge", "loss_freq", "val_psnr"]


@dataclass
class TrainConfig:
    """Optimizer and schedule settings."""

    lr_init: float = 2e-4
    lr_final: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 4
    total_steps: int = 2000
    seed: int = 0
    patch_size: int = 32
    val_every: int = 0
    ckpt_every: int = 0
    clip_grad: Optional[float] = None

    def validate(self) -> None:
        if not 0 <= self.lr_final <= self.lr_init:
            raise ConfigError(f"need 0 <= lr_final <= lr_init, got {self.lr_final}, {self.lr_init}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.adam_eps <= 0:
            raise ConfigError(f"adam_eps must be > 0, got {self.adam_eps}")
        if self.batch_size < 1 or self.total_steps < 1:
            raise ConfigError("batch_size and total_steps must be >= 1")
        if self.patch_size < SIZE_MULTIPLE or self.patch_size % SIZE_MULTIPLE:
            raise ConfigError(f"patch_size must be a positive multiple of {SIZE_MULTIPLE}, got {self.patch_size}")
        if self.val_every < 0 or self.ckpt_every < 0:
            raise ConfigError("val_every and ckpt_every must be >= 0")
        if self.clip_grad is not None and self.clip_grad <= 0:
            raise ConfigError(f"clip_grad must be > 0, got {self.clip_grad}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def cosine_lr(t: int, cfg: TrainConfig) -> float:
    """lr_final + (lr_init - lr_final) * (1 + cos(pi * t / total_steps)) / 2."""
    if not 0 <= t <= cfg.total_steps:
        raise ContractError(f"step {t} outside [0, {cfg.total_steps}]")
    return cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + math.cos(math.pi * t / cfg.total_steps))


@dataclass
class OptimState:
    """Adam moments per parameter name and the step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def to_records(self) -> "OrderedDict[str, np.ndarray]":
        records: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name in self.m:
            records[f"optim.m.{name}"] = self.m[name]
            records[f"optim.v.{name}"] = self.v[name]
        records["optim.step"] = np.array(self.t, dtype=np.int64)
        return records

    @classmethod
    def from_records(cls, records: dict[str, np.ndarray]) -> "OptimState":
        """Rebuild from checkpoint records; missing step means a fresh state."""
        state = cls()
        for name, array in records.items():
            if name.startswith("optim.m."):
                state.m[name[len("optim.m."):]] = np.array(array)
            elif name.startswith("optim.v."):
                state.v[name[len("optim.v."):]] = np.array(array)
        if set(state.m) != set(state.v):
            raise ContractError("checkpoint optimizer moments are incomplete")
        if "optim.step" in records:
            state.t = int(records["optim.step"])
        return state


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: OptimState,
    lr: float,
    cfg: TrainConfig,
) -> None:
    """
    One bias-corrected Adam update, in place on ``params`` and ``state``.

    A parameter absent from ``grads`` is treated as having zero gradient.

    Raises:
        DimensionError: A gradient's shape differs from its parameter's.
    """
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    correction1 = 1.0 - b1 ** state.t
    correction2 = 1.0 - b2 ** state.t
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        elif grad.shape != param.shape:
            raise DimensionError(f"{name}: gradient {grad.shape} vs parameter {param.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        state.m[name] = m.astype(param.dtype, copy=False)
        state.v[name] = v.astype(param.dtype, copy=False)
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + cfg.adam_eps)
        param.data = (param.data - update).astype(param.dtype, copy=False)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``; return the norm."""
    norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for name in grads:
            grads[name] = (grads[name] * scale).astype(grads[name].dtype, copy=False)
    return norm


class Trainer:
    """
    Drives training of one model over a list of image pairs.

    Args:
        model: Network to optimize in place.
        train_pairs: Training images (patches are cropped per step).
        cfg: Optimizer and schedule settings.
        loss_cfg: Loss weights.
        val_pairs: Optional validation images for periodic PSNR.
        log_path: CSV log destination (appended on resume).
        ckpt_path: Checkpoint destination.
    """

    def __init__(
        self,
        model: SFAFNet,
        train_pairs: Sequence[ImagePair],
        cfg: TrainConfig,
        loss_cfg: Optional[LossConfig] = None,
        val_pairs: Optional[Sequence[ImagePair]] = None,
        log_path: Optional[str] = None,
        ckpt_path: Optional[str] = None,
    ):
        cfg.validate()
        self.loss_cfg = loss_cfg or LossConfig()
        self.loss_cfg.validate()
        if not train_pairs:
            raise ContractError("training set is empty")
        smallest = min(min(p.height, p.width) for p in train_pairs)
        if cfg.patch_size > smallest:
            raise ConfigError(f"patch_size {cfg.patch_size} exceeds the smallest image side {smallest}")
        self.model = model
        self.train_pairs = list(train_pairs)
        self.val_pairs = list(val_pairs or [])
        self.cfg = cfg
        self.log_path = log_path
        self.ckpt_path = ckpt_path
        self.state = OptimState()
        self.params = OrderedDict(model.named_parameters())
        self.history: list[dict[str, Any]] = []

    # ------------------------------------------------------------------
    # Pieces of one step
    # ------------------------------------------------------------------

    def sample_batch(self, step: int) -> tuple[Tensor, list[Tensor]]:
        """Seeded batch for ``step``: random images, random crops, random flips."""
        rng = np.random.default_rng([self.cfg.seed, step])
        indices = rng.integers(0, len(self.train_pairs), size=self.cfg.batch_size)
        degraded, sharp = [], []
        for slot, index in enumerate(indices):
            pair = self.train_pairs[int(index)]
            (patch,) = extract_patches(pair, self.cfg.patch_size, 1, seed=[self.cfg.seed, step, slot])
            patch = augment(patch, seed=[self.cfg.seed, step, slot, 1])
            degraded.append(patch.degraded)
            sharp.append(patch.sharp)
        dtype = self.model.stem.weight.dtype
        batch = np.stack(degraded).astype(dtype)
        targets = [Tensor(t.astype(dtype)) for t in target_pyramid(np.stack(sharp))]
        return Tensor(batch), targets

    def train_step(self, step: int) -> dict[str, Any]:
        """
        Forward, loss, backward and Adam update for ``step``.

        Raises:
            NonFiniteError: The loss or a gradient is NaN/Inf.
        """
        lr = cosine_lr(step, self.cfg)
        images, targets = self.sample_batch(step)
        self.model.zero_grad()
        loss, breakdown = composite_loss(self.model(images), targets, self.loss_cfg)
        if not loss.is_finite():
            name = self._non_finite_source(images, loss)
            raise NonFiniteError(f"non-finite loss at step {step}; first non-finite tensor: {name}", name)
        loss.backward()
        grads = {name: p.grad for name, p in self.params.items() if p.grad is not None}
        for name, grad in grads.items():
            if not np.isfinite(grad).all():
                raise NonFiniteError(f"non-finite gradient for {name} at step {step}", name)
        if self.cfg.clip_grad is not None:
            norm = clip_grad_norm(grads, self.cfg.clip_grad)
            logger.debug(f"step {step}: gradient norm {norm:.4g}")
        adam_step(self.params, grads, self.state, lr, self.cfg)
        logger.debug(f"step {step}: lr={lr:.3e} {breakdown}")
        return {"step": step + 1, "lr": lr, **breakdown}

    def _non_finite_source(self, images: Tensor, loss: Tensor) -> str:
        """Name the input or parameter holding NaN/Inf, else the first bad graph node."""
        if not images.is_finite():
            return "input"
        for name, param in self.params.items():
            if not param.is_finite():
                return name
        bad = Graph.trace(loss).first_non_finite()
        return bad.name if bad is not None and bad.name else "loss"

    def validate(self) -> float:
        """Mean PSNR of restored validation images (full size)."""
        if not self.val_pairs:
            return float("nan")
        scores = [psnr(restore(self.model, p.degraded), p.sharp) for p in self.val_pairs]
        return float(np.mean(scores))

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def save(self, path: Optional[str] = None) -> None:
        path = path or self.ckpt_path
        if path is None:
            raise ConfigError("no checkpoint path configured")
        records = self.state.to_records()
        records.update(self.loss_cfg.to_records())
        checkpoint.save_model(path, self.model, extra=records)

    def restore_state(self, records: dict[str, np.ndarray]) -> None:
        """Adopt optimizer state and loss settings loaded with the model's checkpoint."""
        state = OptimState.from_records(records)
        unknown = set(state.m) - set(self.params)
        if unknown:
            raise ContractError(f"optimizer state for unknown parameters: {sorted(unknown)[:5]}")
        if state.t > self.cfg.total_steps:
            raise ContractError(f"checkpoint step {state.t} beyond total_steps {self.cfg.total_steps}")
        self.state = state
        saved_loss = LossConfig.from_records(records)
        if saved_loss is not None:
            if saved_loss != self.loss_cfg:
                logger.warning(
                    f"Using loss settings from checkpoint {saved_loss.to_dict()} over {self.loss_cfg.to_dict()}"
                )
            self.loss_cfg = saved_loss
        logger.info(f"Resuming at step {state.t}")

    def _log_row(self, row: dict[str, Any]) -> None:
        self.history.append(row)
        if self.log_path is None:
            return
        is_new = not os.path.exists(self.log_path) or os.path.getsize(self.log_path) == 0
        with open(self.log_path, "a", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=LOG_COLUMNS, extrasaction="ignore")
            if is_new:
                writer.writeheader()
            writer.writerow(row)

    # ------------------------------------------------------------------
    # Loop
    # ------------------------------------------------------------------

    def run(self, until: Optional[int] = None) -> list[dict[str, Any]]:
        """
        Train from the current step up to ``until`` (default: total_steps).

        Returns:
            The log rows written during this call.
        """
        until = self.cfg.total_steps if until is None else min(until, self.cfg.total_steps)
        start = self.state.t
        logger.info(
            f"Training steps {start}..{until} on {len(self.train_pairs)} images, "
            f"{self.model.parameter_count()} parameters"
        )
        rows = []
        for step in range(start, until):
            row = self.train_step(step)
            done = step + 1
            val_due = self.cfg.val_every and done % self.cfg.val_every == 0
            row["val_psnr"] = f"{self.validate():.4f}" if val_due and self.val_pairs else ""
            self._log_row(row)
            rows.append(row)
            if self.ckpt_path and self.cfg.ckpt_every and done % self.cfg.ckpt_every == 0:
                self.save()
        if self.ckpt_path:
            self.save()
        if rows:
            logger.info(f"Finished at step {until}: loss {rows[-1]['loss_total']:.5f}")
        return rows


def train(
    model: SFAFNet,
    dataset: Sequence[ImagePair],
    cfg: TrainConfig,
    **kwargs: Any,
) -> Trainer:
    """Train ``model`` on ``dataset`` for ``cfg.total_steps`` and return the trainer."""
    trainer = Trainer(model, dataset, cfg, **kwargs)
    trainer.run()
    return trainer

"""
Finite-difference gradient checks.

Analytic gradients from ``Tensor.backward`` are compared against central
differences in float64 on a random sample of entries per tensor, using
the norm-based relative error ||a - n|| / max(||a||, ||n||, floor).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import ops
from .blocks import NAFBlock, SCABlock, sca, simple_gate
from .errors import ConfigError
from .fdgm import FDGM
from .gfm import GFM, AdaptiveFusion, CrossAttention, Gate
from .losses import LossConfig, charbonnier, edge_loss, freq_loss, total_loss
from .network import ArchConfig, GSFFBlock, SFAFNet
from .nn import Conv2d, Module
from .tensor import Tensor, default_dtype

logger = logging.getLogger(__name__)

STEP = 1e-4
TOLERANCE = 1e-3
FLOOR = 1e-6


@dataclass
class GradCheckResult:
    name: str
    rel_error: float
    entries: int
    tol: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.rel_error < self.tol


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: dict[str, Tensor],
    samples: int = 4,
    h: float = STEP,
    tol: float = TOLERANCE,
    seed: int = 0,
) -> list[GradCheckResult]:
    """
    Compare analytic and numerical gradients of ``loss_fn`` w.r.t. ``tensors``.

    Args:
        loss_fn: Recomputes the scalar loss from the current tensor values.
        tensors: Float64 leaves that require grad, by name.
        samples: Entries checked per tensor (all entries if the tensor is smaller).
        h: Central-difference step.
        tol: Pass threshold on the relative error.
        seed: Entry sampling seed.
    """
    for name, t in tensors.items():
        if t.dtype != np.float64 or not t.requires_grad:
            raise ConfigError(f"{name}: gradient checks need float64 leaves with requires_grad")
        # Entries are perturbed through a flat view.
        t.data = np.ascontiguousarray(t.data)
        t.zero_grad()
    loss_fn().backward()

    rng = np.random.default_rng(seed)
    results = []
    for name, t in tensors.items():
        analytic_full = t.grad if t.grad is not None else np.zeros_like(t.data)
        count = min(samples, t.size)
        flat_indices = rng.choice(t.size, size=count, replace=False)
        analytic = np.empty(count)
        numeric = np.empty(count)
        flat = t.data.reshape(-1)
        for i, flat_index in enumerate(flat_indices):
            original = flat[flat_index]
            flat[flat_index] = original + h
            plus = loss_fn().item()
            flat[flat_index] = original - h
            minus = loss_fn().item()
            flat[flat_index] = original
            numeric[i] = (plus - minus) / (2.0 * h)
            analytic[i] = analytic_full.reshape(-1)[flat_index]
        scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), FLOOR)
        error = float(np.linalg.norm(analytic - numeric) / scale)
        results.append(GradCheckResult(name, error, count, tol))
        logger.debug(f"gradcheck {name}: rel err {error:.2e} over {count} entries")
    return results


def _leaf(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _projection(rng: np.random.Generator, out: Tensor) -> Callable[[Tensor], Tensor]:
    """Fixed random linear functional, so every output entry gets a distinct weight."""
    weights = Tensor(rng.standard_normal(out.shape))
    return lambda y: (y * weights).sum()


def _module_check(
    module: Module, inputs: dict[str, Tensor], forward: Callable[[], Tensor], seed: int, samples: int
) -> list[GradCheckResult]:
    rng = np.random.default_rng(seed + 1)
    project = _projection(rng, forward())
    tensors = dict(inputs)
    tensors.update(module.named_parameters(prefix=f"{type(module).__name__}."))
    return check_gradients(lambda: project(forward()), tensors, samples=samples, seed=seed)


# ----------------------------------------------------------------------
# Named suites
# ----------------------------------------------------------------------


def _check_conv2d(rng, seed, samples):
    x = _leaf(rng, 2, 4, 6, 6)
    layers = [Conv2d(4, 6, 3, rng), Conv2d(4, 4, 3, rng, groups=4, padding_mode="reflect"),
              Conv2d(4, 2, 3, rng, stride=2)]
    results = []
    for layer in layers:
        results += _module_check(layer, {"x": x}, lambda layer=layer: layer(x), seed, samples)
    return results


def _check_layer_norm(rng, seed, samples):
    x = _leaf(rng, 2, 4, 3, 3)
    gamma, beta = _leaf(rng, 4), _leaf(rng, 4)
    forward = lambda: ops.layer_norm(x, gamma, beta)  # noqa: E731
    project = _projection(rng, forward())
    return check_gradients(lambda: project(forward()), {"x": x, "gamma": gamma, "beta": beta},
                           samples=samples, seed=seed)


def _check_softmax(rng, seed, samples):
    x = _leaf(rng, 3, 5, 4)
    results = []
    for axis in (-1, 1):
        project = _projection(rng, ops.softmax(x, axis=axis))
        results += check_gradients(lambda axis=axis, project=project: project(ops.softmax(x, axis=axis)),
                                   {f"x(axis={axis})": x}, samples=samples, seed=seed)
    return results


def _check_simple_gate(rng, seed, samples):
    x = _leaf(rng, 2, 6, 3, 3)
    project = _projection(rng, simple_gate(x))
    return check_gradients(lambda: project(simple_gate(x)), {"x": x}, samples=samples, seed=seed)


def _check_sca(rng, seed, samples):
    x = _leaf(rng, 2, 4, 5, 5)
    conv = Conv2d(4, 4, 1, rng)
    return _module_check(conv, {"x": x}, lambda: sca(x, conv), seed, samples)


def _check_scablock(rng, seed, samples):
    x = _leaf(rng, 1, 4, 6, 6)
    block = SCABlock(4, rng)
    return _module_check(block, {"x": x}, lambda: block(x), seed, samples)


def _check_nafblock(rng, seed, samples):
    x = _leaf(rng, 1, 4, 6, 6)
    block = NAFBlock(4, rng)
    # Zero-initialized projections would hide most of the block from the check.
    for param in block.parameters():
        if not param.data.any():
            param.data = rng.standard_normal(param.shape) * 0.5
    return _module_check(block, {"x": x}, lambda: block(x), seed, samples)


def _check_fdgm(rng, seed, samples):
    x = _leaf(rng, 2, 4, 6, 6)
    fdgm = FDGM(4, 2, 3, rng)

    def forward():
        low, high = fdgm(x)
        return ops.concat([low, high], axis=1)

    return _module_check(fdgm, {"x": x}, forward, seed, samples)


def _check_gate(rng, seed, samples):
    x = _leaf(rng, 2, 8, 4, 4)
    gate = Gate(8, rng)
    return _module_check(gate, {"x": x}, lambda: gate(x), seed, samples)


def _check_cross_attention(rng, seed, samples):
    a, b = _leaf(rng, 2, 4, 4, 4), _leaf(rng, 2, 4, 4, 4)
    cam = CrossAttention(4, rng)
    return _module_check(cam, {"a": a, "b": b}, lambda: cam(a, b), seed, samples)


def _check_adaptive_fusion(rng, seed, samples):
    xs = {name: _leaf(rng, 2, 4, 3, 3) for name in ("x_sl", "x_sh", "x_lh")}
    fuse = AdaptiveFusion(4, rng)
    return _module_check(fuse, xs, lambda: fuse(*xs.values()), seed, samples)


def _check_gfm(rng, seed, samples):
    xs = {name: _leaf(rng, 1, 4, 4, 4) for name in ("x_s", "x_l", "x_h")}
    gfm = GFM(4, rng)
    return _module_check(gfm, xs, lambda: gfm(*xs.values()), seed, samples)


def _check_gsff(rng, seed, samples):
    x = _leaf(rng, 1, 4, 8, 8)
    block = GSFFBlock(4, ArchConfig.preset("tiny"), rng)
    for param in block.parameters():
        if not param.data.any():
            param.data = rng.standard_normal(param.shape) * 0.5
    return _module_check(block, {"x": x}, lambda: block(x), seed, samples)


def _check_losses(rng, seed, samples):
    pred = _leaf(rng, 1, 3, 8, 8)
    target = Tensor(rng.standard_normal((1, 3, 8, 8)))
    results = []
    for name, fn in (("charbonnier", charbonnier), ("edge_loss", edge_loss), ("freq_loss", freq_loss)):
        results += check_gradients(lambda fn=fn: fn(pred, target), {f"{name}.pred": pred},
                                   samples=samples, seed=seed)
    return results


def _check_network(rng, seed, samples, max_tensors: int = 12):
    model = SFAFNet(ArchConfig.preset("tiny"), seed=seed)
    for param in model.parameters():
        if not param.data.any():
            param.data = rng.standard_normal(param.shape) * 0.1
    image = Tensor(rng.uniform(0.0, 1.0, size=(1, 3, 16, 16)), requires_grad=True)
    targets = [Tensor(rng.uniform(0.0, 1.0, size=(1, 3, s, s))) for s in (16, 16, 8, 4)]
    loss_cfg = LossConfig()
    named = list(model.named_parameters())
    chosen = rng.choice(len(named), size=min(max_tensors, len(named)), replace=False)
    tensors = {"image": image}
    tensors.update(named[int(i)] for i in sorted(chosen))
    for _, param in named:
        param.zero_grad()
    return check_gradients(lambda: total_loss(model(image), targets, loss_cfg), tensors,
                           samples=samples, seed=seed)


SUITES: dict[str, Callable] = {
    "conv2d": _check_conv2d,
    "layer_norm": _check_layer_norm,
    "softmax": _check_softmax,
    "simple_gate": _check_simple_gate,
    "sca": _check_sca,
    "scablock": _check_scablock,
    "nafblock": _check_nafblock,
    "fdgm": _check_fdgm,
    "gate": _check_gate,
    "cross_attention": _check_cross_attention,
    "adaptive_fusion": _check_adaptive_fusion,
    "gfm": _check_gfm,
    "gsff": _check_gsff,
    "losses": _check_losses,
    "network": _check_network,
}


def run_suite(name: str, seed: int = 0, samples: int = 3) -> list[GradCheckResult]:
    """Run one named check in float64."""
    if name not in SUITES:
        raise ConfigError(f"unknown gradcheck module {name!r}; choose from {sorted(SUITES)}")
    with default_dtype(np.float64):
        rng = np.random.default_rng(seed)
        results = SUITES[name](rng, seed, samples)
    failed = [r for r in results if not r.passed]
    logger.info(f"gradcheck {name}: {len(results) - len(failed)}/{len(results)} tensors passed")
    return results


def run_all(names: Optional[list[str]] = None, seed: int = 0, samples: int = 3) -> dict[str, list[GradCheckResult]]:
    return {name: run_suite(name, seed, samples) for name in (names or list(SUITES))}

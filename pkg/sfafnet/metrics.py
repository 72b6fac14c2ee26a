"""Image quality metrics on C x H x W arrays in [0, 1]."""

from __future__ import annotations

import logging

import numpy as np
from skimage.metrics import structural_similarity

from .errors import DimensionError

logger = logging.getLogger(__name__)

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _check(pred: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"metric operands differ in shape: {pred.shape} vs {target.shape}")
    return pred, target


def psnr(pred: np.ndarray, target: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for near-identical inputs."""
    pred, target = _check(pred, target)
    mse = float(np.mean((pred - target) ** 2))
    if mse < 1e-10:
        logger.debug(f"psnr: mse {mse:.3g} below floor, reporting cap {PSNR_CAP}")
        return PSNR_CAP
    return float(10.0 * np.log10(peak * peak / mse))


def mae(pred: np.ndarray, target: np.ndarray) -> float:
    pred, target = _check(pred, target)
    return float(np.mean(np.abs(pred - target)))


def ssim(pred: np.ndarray, target: np.ndarray, peak: float = 1.0) -> float:
    """
    Structural similarity with an 11x11 Gaussian window (sigma 1.5) and
    population statistics, averaged over channels and the valid interior.

    Raises:
        DimensionError: Shapes differ, or H or W is smaller than the window.
    """
    pred, target = _check(pred, target)
    if pred.ndim != 3:
        raise DimensionError(f"ssim needs C x H x W arrays, got {pred.shape}")
    if min(pred.shape[-2:]) < SSIM_WINDOW:
        raise DimensionError(f"ssim needs H, W >= {SSIM_WINDOW}, got {pred.shape[-2:]}")
    return float(
        structural_similarity(
            pred,
            target,
            data_range=peak,
            channel_axis=0,
            gaussian_weights=True,
            sigma=SSIM_SIGMA,
            use_sample_covariance=False,
        )
    )

"""
Blurred/sharp image pairs: synthetic degradation, patching, augmentation,
multi-scale targets, and the on-disk corpus convention

    <root>/blur_%04d.ppm   <root>/sharp_%04d.ppm

A generated corpus has ``train/`` and ``test/`` sub-directories, each
following that convention.
"""

from __future__ import annotations

import glob
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ContractError, DimensionError
from .image_io import read_image, write_image

logger = logging.getLogger(__name__)

SeedLike = Union[int, Sequence[int]]

_BLUR_PATTERN = re.compile(r"^blur_(\d{4,})\.(ppm|png)$")


@dataclass
class ImagePair:
    """Aligned degraded/sharp images, both 3 x H x W in [0, 1]."""

    degraded: np.ndarray
    sharp: np.ndarray
    id: str = ""

    def __post_init__(self) -> None:
        if self.degraded.shape != self.sharp.shape:
            raise DimensionError(
                f"pair {self.id!r}: degraded {self.degraded.shape} != sharp {self.sharp.shape}"
            )
        if self.sharp.ndim != 3 or self.sharp.shape[0] != 3:
            raise DimensionError(f"pair {self.id!r}: expected 3 x H x W, got {self.sharp.shape}")
        self.degraded = np.clip(self.degraded, 0.0, 1.0)
        self.sharp = np.clip(self.sharp, 0.0, 1.0)

    @property
    def height(self) -> int:
        return self.sharp.shape[1]

    @property
    def width(self) -> int:
        return self.sharp.shape[2]


# ----------------------------------------------------------------------
# Blur kernels
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class BlurKind:
    """A normalized blur: ``gaussian(sigma)`` or ``linear_motion(length, angle)``."""

    name: str
    sigma: float = 0.0
    length: int = 0
    angle: float = 0.0

    @classmethod
    def gaussian(cls, sigma: float) -> "BlurKind":
        if sigma <= 0:
            raise ContractError(f"Gaussian blur needs sigma > 0, got {sigma}")
        return cls("gaussian", sigma=sigma)

    @classmethod
    def linear_motion(cls, length: int, angle: float = 0.0) -> "BlurKind":
        if length < 1:
            raise ContractError(f"motion blur needs length >= 1, got {length}")
        return cls("motion", length=int(length), angle=angle)

    @classmethod
    def parse(cls, text: str) -> "BlurKind":
        """Parse ``gaussian:SIGMA`` or ``motion:LENGTH[:ANGLE_DEGREES]``."""
        kind, _, rest = text.partition(":")
        if kind not in ("gaussian", "motion"):
            raise ConfigError(f"blur must be 'gaussian:SIGMA' or 'motion:LENGTH[:ANGLE]', got {text!r}")
        try:
            if kind == "gaussian":
                sigma = float(rest)
            else:
                length_text, _, angle_text = rest.partition(":")
                length, angle = int(length_text), float(angle_text or 0.0)
        except ValueError as exc:
            raise ConfigError(f"bad blur description {text!r}") from exc
        if kind == "gaussian":
            return cls.gaussian(sigma)
        return cls.linear_motion(length, angle)

    def kernel(self) -> np.ndarray:
        if self.name == "gaussian":
            return gaussian_kernel(self.sigma)
        return linear_motion_kernel(self.length, self.angle)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized isotropic Gaussian of size 2 * ceil(3 sigma) + 1."""
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    profile = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    kernel = np.outer(profile, profile)
    return kernel / kernel.sum()


def linear_motion_kernel(length: int, angle: float = 0.0) -> np.ndarray:
    """Normalized line of ``length`` pixels through the centre at ``angle`` degrees."""
    size = length if length % 2 else length + 1
    centre = size // 2
    kernel = np.zeros((size, size))
    theta = math.radians(angle)
    steps = np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, 4 * length)
    cols = np.clip(np.rint(centre + steps * math.cos(theta)).astype(int), 0, size - 1)
    rows = np.clip(np.rint(centre - steps * math.sin(theta)).astype(int), 0, size - 1)
    np.add.at(kernel, (rows, cols), 1.0)
    return kernel / kernel.sum()


def convolve(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """True 2-D convolution of each channel, reflect padding, same size."""
    k = kernel.shape[0]
    pad = k // 2
    if image.shape[-2] <= pad or image.shape[-1] <= pad:
        raise DimensionError(f"image {image.shape[-2:]} too small for a {k}x{k} kernel")
    padded = np.pad(image, [(0, 0)] * (image.ndim - 2) + [(pad, pad), (pad, pad)], mode="reflect")
    windows = sliding_window_view(padded, (k, k), axis=(-2, -1))
    return np.einsum("...ij,ij->...", windows, kernel[::-1, ::-1])


def make_blur_pair(
    sharp: np.ndarray,
    kind: BlurKind,
    seed: SeedLike = 0,
    noise_sigma: float = 0.0,
    id: str = "",
) -> ImagePair:
    """Blur ``sharp`` with ``kind``, add optional Gaussian noise, clamp."""
    degraded = convolve(np.asarray(sharp, dtype=np.float64), kind.kernel())
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        degraded = degraded + noise_sigma * rng.standard_normal(degraded.shape)
    dtype = sharp.dtype if sharp.dtype.kind == "f" else np.float32
    return ImagePair(degraded.astype(dtype), np.asarray(sharp, dtype=dtype), id=id)


# ----------------------------------------------------------------------
# Patching, augmentation, targets
# ----------------------------------------------------------------------


def extract_patches(pair: ImagePair, size: int, count: int, seed: SeedLike = 0) -> list[ImagePair]:
    """``count`` aligned random ``size`` x ``size`` crops."""
    if size < 1 or size > min(pair.height, pair.width):
        raise ContractError(f"patch size {size} does not fit a {pair.height}x{pair.width} image")
    rng = np.random.default_rng(seed)
    patches = []
    for i in range(count):
        top = int(rng.integers(0, pair.height - size + 1))
        left = int(rng.integers(0, pair.width - size + 1))
        window = (slice(None), slice(top, top + size), slice(left, left + size))
        patches.append(ImagePair(pair.degraded[window], pair.sharp[window], id=f"{pair.id}@{top},{left}"))
    return patches


def flip(pair: ImagePair, horizontal: bool, vertical: bool) -> ImagePair:
    degraded, sharp = pair.degraded, pair.sharp
    if horizontal:
        degraded, sharp = degraded[:, :, ::-1], sharp[:, :, ::-1]
    if vertical:
        degraded, sharp = degraded[:, ::-1, :], sharp[:, ::-1, :]
    return ImagePair(degraded.copy(), sharp.copy(), id=pair.id)


def augment(pair: ImagePair, seed: SeedLike = 0) -> ImagePair:
    """Independent 50% horizontal and vertical flips, same for both images."""
    rng = np.random.default_rng(seed)
    horizontal = bool(rng.random() < 0.5)
    vertical = bool(rng.random() < 0.5)
    return flip(pair, horizontal, vertical)


def downsample2(image: np.ndarray) -> np.ndarray:
    """2x2 average pooling of the last two axes."""
    *lead, height, width = image.shape
    if height % 2 or width % 2:
        raise DimensionError(f"downsample2 needs even spatial size, got {height}x{width}")
    return image.reshape(*lead, height // 2, 2, width // 2, 2).mean(axis=(-3, -1))


def target_pyramid(sharp: np.ndarray) -> list[np.ndarray]:
    """Targets [full, full, half, quarter] in network output order."""
    height, width = sharp.shape[-2:]
    if height % 4 or width % 4:
        raise DimensionError(f"target_pyramid needs H, W divisible by 4, got {height}x{width}")
    half = downsample2(sharp)
    return [sharp, sharp, half, downsample2(half)]


# ----------------------------------------------------------------------
# Synthetic textures
# ----------------------------------------------------------------------


def _fill_convex_polygon(canvas: np.ndarray, vertices: np.ndarray, colour: np.ndarray) -> None:
    """Paint a counter-clockwise convex polygon onto a 3 x H x W canvas."""
    height, width = canvas.shape[1:]
    ys, xs = np.mgrid[0:height, 0:width]
    inside = np.ones((height, width), dtype=bool)
    for (x0, y0), (x1, y1) in zip(vertices, np.roll(vertices, -1, axis=0)):
        inside &= (x1 - x0) * (ys - y0) - (y1 - y0) * (xs - x0) >= 0
    canvas[:, inside] = colour[:, None]


def synth_texture(size: int, seed: SeedLike) -> np.ndarray:
    """A 3 x size x size image: random sinusoid mixture plus filled convex polygons."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size] / float(size)
    image = np.zeros((3, size, size))
    for channel in range(3):
        for _ in range(3):
            fx, fy = rng.uniform(-6.0, 6.0, size=2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            image[channel] += rng.uniform(0.1, 0.3) * np.sin(2.0 * np.pi * (fx * xs + fy * ys) + phase)
    image = 0.5 + image / 2.0
    for _ in range(int(rng.integers(2, 5))):
        sides = int(rng.integers(3, 7))
        centre = rng.uniform(0.2 * size, 0.8 * size, size=2)
        radius = rng.uniform(0.1 * size, 0.3 * size)
        angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=sides))
        vertices = centre + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        _fill_convex_polygon(image, vertices, rng.uniform(0.0, 1.0, size=3))
    return np.clip(image, 0.0, 1.0).astype(np.float32)


# ----------------------------------------------------------------------
# Corpus on disk
# ----------------------------------------------------------------------


@dataclass
class DatasetManifest:
    root: str
    entries: list[tuple[str, str]] = field(default_factory=list)

    @classmethod
    def scan(cls, root: str) -> "DatasetManifest":
        """
        Index every ``blur_NNNN`` image in ``root`` with its ``sharp_NNNN`` partner.

        Raises:
            FileNotFoundError: ``root`` or a partner image is missing.
        """
        if not os.path.isdir(root):
            raise FileNotFoundError(f"dataset directory not found: {root}")
        entries = []
        for blur_path in sorted(glob.glob(os.path.join(root, "blur_*"))):
            match = _BLUR_PATTERN.match(os.path.basename(blur_path))
            if not match:
                continue
            sharp_path = os.path.join(root, f"sharp_{match.group(1)}.{match.group(2)}")
            if not os.path.exists(sharp_path):
                raise FileNotFoundError(f"missing sharp partner for {blur_path}: {sharp_path}")
            entries.append((blur_path, sharp_path))
        logger.info(f"Indexed {len(entries)} pairs under {root}")
        return cls(root, entries)

    def __len__(self) -> int:
        return len(self.entries)

    def load(self) -> list[ImagePair]:
        pairs = []
        for blur_path, sharp_path in self.entries:
            image_id = os.path.splitext(os.path.basename(blur_path))[0].replace("blur_", "")
            pairs.append(ImagePair(read_image(blur_path), read_image(sharp_path), id=image_id))
        return pairs


def split_dir(root: str, split: str) -> str:
    """``root/split`` when it exists, otherwise ``root`` itself."""
    candidate = os.path.join(root, split)
    return candidate if os.path.isdir(candidate) else root


def write_corpus(
    out: str,
    count: int = 64,
    size: int = 64,
    seed: int = 0,
    blur: Optional[BlurKind] = None,
    noise_sigma: float = 0.0,
    ext: str = "ppm",
) -> tuple[DatasetManifest, DatasetManifest]:
    """
    Generate ``count`` texture pairs; the first three quarters go to
    ``out/train``, the rest to ``out/test``.

    Each item draws from its own generator seeded with (seed, index), so
    the corpus does not depend on generation order.
    """
    if count < 2:
        raise ConfigError(f"corpus needs at least 2 images, got {count}")
    blur = blur or BlurKind.gaussian(1.5)
    n_train = (3 * count) // 4
    for index in range(count):
        split = "train" if index < n_train else "test"
        sharp = synth_texture(size, [seed, index])
        pair = make_blur_pair(sharp, blur, seed=[seed, index, 1], noise_sigma=noise_sigma)
        directory = os.path.join(out, split)
        write_image(os.path.join(directory, f"blur_{index:04d}.{ext}"), pair.degraded)
        write_image(os.path.join(directory, f"sharp_{index:04d}.{ext}"), pair.sharp)
    logger.info(f"Wrote {count} pairs ({n_train} train / {count - n_train} test) to {out}")
    return DatasetManifest.scan(os.path.join(out, "train")), DatasetManifest.scan(os.path.join(out, "test"))

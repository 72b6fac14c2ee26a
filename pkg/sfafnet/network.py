"""
Three-scale multi-input multi-output encoder-decoder built from gated
spatial-frequency fusion blocks.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from typing import Any, Optional

import numpy as np

from . import ops
from .blocks import NAFBlock, SCABlock
from .errors import ConfigError, DimensionError
from .fdgm import FDGM
from .gfm import GFM
from .nn import Conv2d, Module, ModuleList
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

# Input height and width must be divisible by this (two 2x downsamplings).
SIZE_MULTIPLE = 4


@dataclass
class ArchConfig:
    """Architecture hyperparameters; channel widths per scale are C, 2C, 4C."""

    base_channels: int = 8
    naf_blocks: int = 2
    rows: int = 2
    kernel_size: int = 3
    filter: str = "learned"
    use_gate: bool = True

    PRESETS = {
        "sfafnet": dict(base_channels=32, naf_blocks=15, rows=8),
        "sfafnet-b": dict(base_channels=64, naf_blocks=15, rows=8),
        "desk": dict(base_channels=8, naf_blocks=2, rows=2),
        "tiny": dict(base_channels=4, naf_blocks=1, rows=2),
    }

    @classmethod
    def preset(cls, name: str, **overrides: Any) -> "ArchConfig":
        if name not in cls.PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(cls.PRESETS)}")
        return cls(**{**cls.PRESETS[name], **overrides})

    @property
    def gaussian_sigma(self) -> Optional[float]:
        """Sigma of the fixed Gaussian bank, or None for learned filters."""
        if self.filter == "learned":
            return None
        kind, _, value = self.filter.partition(":")
        if kind != "gaussian":
            raise ConfigError(f"filter must be 'learned' or 'gaussian:SIGMA', got {self.filter!r}")
        try:
            sigma = float(value)
        except ValueError as exc:
            raise ConfigError(f"bad Gaussian sigma in {self.filter!r}") from exc
        if sigma <= 0:
            raise ConfigError(f"Gaussian sigma must be > 0, got {sigma}")
        return sigma

    def validate(self) -> None:
        if self.base_channels < 4 or self.base_channels % 4:
            raise ConfigError(f"base_channels must be a positive multiple of 4, got {self.base_channels}")
        if self.rows < 1 or self.base_channels % self.rows:
            raise ConfigError(f"rows={self.rows} must divide base_channels={self.base_channels}")
        if self.naf_blocks < 1:
            raise ConfigError(f"naf_blocks must be >= 1, got {self.naf_blocks}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        _ = self.gaussian_sigma

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ArchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown architecture fields: {sorted(unknown)}")
        config = cls(**data)
        config.validate()
        return config


class GSFFBlock(Module):
    """N NAFBlocks, then FDGM on (input + spatial features), then GFM."""

    def __init__(self, channels: int, config: ArchConfig, rng: np.random.Generator):
        super().__init__()
        self.nafs = ModuleList([NAFBlock(channels, rng) for _ in range(config.naf_blocks)])
        self.fdgm = FDGM(
            channels, config.rows, config.kernel_size, rng, gaussian_sigma=config.gaussian_sigma
        )
        self.gfm = GFM(channels, rng, use_gate=config.use_gate)
        self.captured: Optional[dict[str, np.ndarray]] = None

    def forward(self, x_in: Tensor) -> Tensor:
        x_s = x_in
        for naf in self.nafs:
            x_s = naf(x_s)
        x_l, x_h = self.fdgm(x_in + x_s)
        if self.captured is not None:
            self.captured.update(x_s=x_s.data.copy(), x_l=x_l.data.copy(), x_h=x_h.data.copy())
        return self.gfm(x_s, x_l, x_h)


class ShallowFeature(Module):
    """3x3 conv lifting a downsampled RGB input to the scale width, then SCABlock."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.lift = Conv2d(3, channels, 3, rng)
        self.attention = SCABlock(channels, rng)

    def forward(self, image: Tensor) -> Tensor:
        return self.attention(self.lift(image))


class SFAFNet(Module):
    """
    Encoder scales 1-3 with downsampled inputs merged at scales 2 and 3,
    decoder scales 2-1 with skip merges, a refinement block, and four
    residual outputs: [refined full, decoder full, half, quarter].

    The four output heads start at zero, so an untrained network returns
    its input pyramid unchanged.
    """

    def __init__(self, config: ArchConfig, seed: int = 0):
        super().__init__()
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)
        c1, c2, c3 = config.base_channels, 2 * config.base_channels, 4 * config.base_channels

        self.stem = Conv2d(3, c1, 3, rng)
        self.encoder1 = GSFFBlock(c1, config, rng)
        self.down1 = Conv2d(c1, c2, 3, rng, stride=2)
        self.shallow2 = ShallowFeature(c2, rng)
        self.merge2 = Conv2d(2 * c2, c2, 1, rng)
        self.encoder2 = GSFFBlock(c2, config, rng)
        self.down2 = Conv2d(c2, c3, 3, rng, stride=2)
        self.shallow3 = ShallowFeature(c3, rng)
        self.merge3 = Conv2d(2 * c3, c3, 1, rng)
        self.encoder3 = GSFFBlock(c3, config, rng)
        self.head3 = Conv2d(c3, 3, 3, rng, zero_init=True)

        self.up3 = Conv2d(c3, c2, 1, rng)
        self.skip2 = Conv2d(2 * c2, c2, 1, rng)
        self.decoder2 = GSFFBlock(c2, config, rng)
        self.head2 = Conv2d(c2, 3, 3, rng, zero_init=True)
        self.up2 = Conv2d(c2, c1, 1, rng)
        self.skip1 = Conv2d(2 * c1, c1, 1, rng)
        self.decoder1 = GSFFBlock(c1, config, rng)
        self.head1 = Conv2d(c1, 3, 3, rng, zero_init=True)

        self.refine = GSFFBlock(c1, config, rng)
        self.head_out = Conv2d(c1, 3, 3, rng, zero_init=True)

        self.name_parameters()
        logger.info(f"SFAFNet built: {config.to_dict()}, {self.parameter_count()} parameters")

    @property
    def output_heads(self) -> list[Conv2d]:
        return [self.head_out, self.head1, self.head2, self.head3]

    @property
    def blocks(self) -> dict[str, GSFFBlock]:
        return {
            "encoder1": self.encoder1,
            "encoder2": self.encoder2,
            "encoder3": self.encoder3,
            "decoder2": self.decoder2,
            "decoder1": self.decoder1,
            "refine": self.refine,
        }

    def forward(self, image: Tensor) -> list[Tensor]:
        if image.ndim != 4 or image.shape[1] != 3:
            raise DimensionError(f"expected N x 3 x H x W image, got {image.shape}")
        height, width = image.shape[2:]
        if height % SIZE_MULTIPLE or width % SIZE_MULTIPLE:
            raise DimensionError(f"H and W must be divisible by {SIZE_MULTIPLE}, got {height}x{width}")
        image_half = ops.resample(image, "down2")
        image_quarter = ops.resample(image_half, "down2")

        enc1 = self.encoder1(self.stem(image))
        enc2 = self.encoder2(
            self.merge2(ops.concat([self.down1(enc1), self.shallow2(image_half)], axis=1))
        )
        enc3 = self.encoder3(
            self.merge3(ops.concat([self.down2(enc2), self.shallow3(image_quarter)], axis=1))
        )
        out_quarter = self.head3(enc3) + image_quarter

        dec2 = self.decoder2(
            self.skip2(ops.concat([self.up3(ops.resample(enc3, "up2")), enc2], axis=1))
        )
        out_half = self.head2(dec2) + image_half

        dec1 = self.decoder1(
            self.skip1(ops.concat([self.up2(ops.resample(dec2, "up2")), enc1], axis=1))
        )
        out_full = self.head1(dec1) + image

        restored = self.head_out(self.refine(dec1)) + image
        return [restored, out_full, out_half, out_quarter]

    # ------------------------------------------------------------------
    # Feature capture
    # ------------------------------------------------------------------

    def capture_features(self, enabled: bool = True) -> None:
        """Start (or stop) recording intermediate maps of every GSFFBlock."""
        for block in self.blocks.values():
            block.captured = {} if enabled else None
            block.gfm.captured = {} if enabled else None

    def captured_features(self) -> dict[str, np.ndarray]:
        """Recorded maps keyed ``<block>.<feature>``."""
        features: dict[str, np.ndarray] = {}
        for name, block in self.blocks.items():
            for source in (block.captured, block.gfm.captured):
                for key, value in (source or {}).items():
                    features[f"{name}.{key}"] = value
        return features


def pad_to_multiple(image: np.ndarray, multiple: int = SIZE_MULTIPLE) -> np.ndarray:
    """Reflect-pad the bottom/right of a C x H x W image to a multiple of ``multiple``."""
    height, width = image.shape[-2:]
    pad_h = (-height) % multiple
    pad_w = (-width) % multiple
    if pad_h == 0 and pad_w == 0:
        return image
    mode = "reflect" if height > pad_h and width > pad_w else "edge"
    return np.pad(image, [(0, 0)] * (image.ndim - 2) + [(0, pad_h), (0, pad_w)], mode=mode)


def restore(model: SFAFNet, image: np.ndarray) -> np.ndarray:
    """
    Deblur one C x H x W image in [0, 1]; any size is accepted.

    Returns:
        The refined full-resolution output clipped to [0, 1].
    """
    height, width = image.shape[-2:]
    padded = pad_to_multiple(image)
    if padded.shape != image.shape:
        logger.warning(f"Padding {height}x{width} input to {padded.shape[-2]}x{padded.shape[-1]}")
    with no_grad():
        batch = Tensor(padded[None].astype(model.stem.weight.dtype))
        restored = model(batch)[0].data[0]
    return np.clip(restored[:, :height, :width], 0.0, 1.0)

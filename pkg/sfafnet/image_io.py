"""
Image files <-> 3 x H x W float arrays in [0, 1].

Binary PPM (P6, maxval 255) is always available. PNG needs Pillow
(``pip install sfafnet[png]``).
"""

from __future__ import annotations

import logging
import os

import numpy as np

from .errors import DecodeError, DimensionError

logger = logging.getLogger(__name__)

_WHITESPACE = b" \t\r\n"


def to_u8(image: np.ndarray) -> np.ndarray:
    """C x H x W floats -> H x W x C bytes via round(v * 255)."""
    return np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def from_u8(pixels: np.ndarray) -> np.ndarray:
    """H x W x C bytes -> C x H x W float32 via v / 255."""
    return (pixels.astype(np.float32) / np.float32(255.0)).transpose(2, 0, 1).copy()


def _header_tokens(payload: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping # comments."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(payload):
            raise DecodeError("PPM header truncated")
        byte = payload[pos:pos + 1]
        if byte in _WHITESPACE:
            pos += 1
        elif byte == b"#":
            newline = payload.find(b"\n", pos)
            if newline < 0:
                raise DecodeError("PPM header truncated inside a comment")
            pos = newline + 1
        else:
            start = pos
            while pos < len(payload) and payload[pos:pos + 1] not in _WHITESPACE + b"#":
                pos += 1
            tokens.append(payload[start:pos])
    # Exactly one whitespace byte separates maxval from the raster.
    if pos >= len(payload) or payload[pos:pos + 1] not in _WHITESPACE:
        raise DecodeError("PPM header not terminated by whitespace")
    return tokens, pos + 1


def decode_ppm(payload: bytes) -> np.ndarray:
    """
    Parse a binary P6 image.

    Raises:
        DecodeError: Wrong magic, malformed header, unsupported maxval or a
            raster shorter than the header announces.
    """
    tokens, offset = _header_tokens(payload, 4)
    magic, width_token, height_token, maxval_token = tokens
    if magic != b"P6":
        raise DecodeError(f"not a binary PPM (magic {magic!r})")
    try:
        width, height, maxval = int(width_token), int(height_token), int(maxval_token)
    except ValueError as exc:
        raise DecodeError(f"bad PPM header values: {tokens[1:]}") from exc
    if width < 1 or height < 1:
        raise DecodeError(f"bad PPM size {width}x{height}")
    if maxval != 255:
        raise DecodeError(f"only maxval 255 is supported, got {maxval}")
    expected = width * height * 3
    raster = payload[offset:offset + expected]
    if len(raster) < expected:
        raise DecodeError(f"PPM raster truncated: {len(raster)} of {expected} bytes")
    return from_u8(np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3))


def encode_ppm(image: np.ndarray) -> bytes:
    pixels = to_u8(image)
    height, width = pixels.shape[:2]
    return f"P6\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes()


def _pillow():
    try:
        from PIL import Image
    except ImportError as exc:
        logger.warning("PNG requested but Pillow is not installed")
        raise DecodeError("PNG support needs Pillow: pip install sfafnet[png]") from exc
    return Image


def read_image(path: str) -> np.ndarray:
    """
    Load ``path`` as a 3 x H x W float32 array.

    Raises:
        FileNotFoundError: ``path`` does not exist.
        DecodeError: The file cannot be decoded.
    """
    if path.lower().endswith(".png"):
        image = _pillow()
        try:
            with image.open(path) as img:
                pixels = np.asarray(img.convert("RGB"), dtype=np.uint8)
        except OSError as exc:
            if not os.path.exists(path):
                raise FileNotFoundError(path) from exc
            raise DecodeError(f"{path}: {exc}") from exc
        return from_u8(pixels)
    with open(path, "rb") as f:
        payload = f.read()
    try:
        return decode_ppm(payload)
    except DecodeError as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def write_image(path: str, image: np.ndarray) -> None:
    """Write a 3 x H x W array (values clamped to [0, 1]) as PPM or PNG."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise DimensionError(f"expected a 3 x H x W image, got {image.shape}")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    if path.lower().endswith(".png"):
        _pillow().fromarray(to_u8(image)).save(path)
        return
    with open(path, "wb") as f:
        f.write(encode_ppm(image))

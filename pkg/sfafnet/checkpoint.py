"""
Binary checkpoint format.

Layout (all integers little-endian):

    b"SFAF"  u32 version  u32 config_len  config_json (UTF-8)
    then, per tensor:
    u32 name_len  name (UTF-8)  u8 dtype_tag  u8 ndim  u32 dims[ndim]  raw values

Values are stored little-endian so buffers round-trip bit for bit.
Optimizer state, when present, is stored as extra records whose names
start with ``optim.``.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from collections import OrderedDict
from typing import Optional

import numpy as np

from .errors import DecodeError
from .network import ArchConfig, SFAFNet

logger = logging.getLogger(__name__)

MAGIC = b"SFAF"
VERSION = 1

DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_TAG_FOR_KIND = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("int64"): 2}


def encode(config: ArchConfig, tensors: "OrderedDict[str, np.ndarray]") -> bytes:
    """Serialize a config and an ordered map of named arrays."""
    config_json = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(config_json)), config_json]
    for name, array in tensors.items():
        array = np.asarray(array)
        tag = _TAG_FOR_KIND.get(array.dtype)
        if tag is None:
            raise DecodeError(f"cannot store {name!r} with dtype {array.dtype}")
        encoded_name = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(struct.pack("<BB", tag, array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=DTYPE_TAGS[tag]).tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, count: int) -> bytes:
        end = self.offset + count
        if end > len(self.payload):
            raise DecodeError(
                f"checkpoint truncated: wanted {count} bytes at offset {self.offset}, "
                f"{len(self.payload) - self.offset} left"
            )
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    @property
    def exhausted(self) -> bool:
        return self.offset == len(self.payload)


def decode(payload: bytes) -> tuple[ArchConfig, "OrderedDict[str, np.ndarray]"]:
    """
    Parse checkpoint bytes.

    Raises:
        DecodeError: Bad magic, unsupported version, truncation, or an
            unknown dtype tag.
        ConfigError: The embedded architecture is invalid.
    """
    reader = _Reader(payload)
    if reader.take(4) != MAGIC:
        raise DecodeError("not an SFAF checkpoint (bad magic)")
    version, config_len = reader.unpack("<II")
    if version != VERSION:
        raise DecodeError(f"unsupported checkpoint version {version}")
    try:
        config_data = json.loads(reader.take(config_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"checkpoint config is not valid JSON: {exc}") from exc
    config = ArchConfig.from_dict(config_data)

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    while not reader.exhausted:
        (name_len,) = reader.unpack("<I")
        name = reader.take(name_len).decode("utf-8")
        tag, ndim = reader.unpack("<BB")
        if tag not in DTYPE_TAGS:
            raise DecodeError(f"{name}: unknown dtype tag {tag}")
        shape = reader.unpack(f"<{ndim}I")
        dtype = DTYPE_TAGS[tag]
        count = int(np.prod(shape, dtype=np.int64))
        raw = reader.take(count * dtype.itemsize)
        array = np.frombuffer(raw, dtype=dtype).reshape(shape)
        tensors[name] = array.astype(dtype.newbyteorder("="))
    return config, tensors


def save_model(path: str, model: SFAFNet, extra: Optional[dict[str, np.ndarray]] = None) -> None:
    """
    Write the model's parameters (and optional extra arrays) to ``path``.

    The file is written to a sibling temporary path and renamed into place.
    """
    tensors = OrderedDict(model.state_dict())
    for name, array in (extra or {}).items():
        if name in tensors:
            raise DecodeError(f"extra record {name!r} collides with a parameter name")
        tensors[name] = array
    payload = encode(model.config, tensors)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "wb") as f:
        f.write(payload)
    os.replace(tmp_path, path)
    logger.info(f"Saved checkpoint {path} ({len(tensors)} records, {len(payload)} bytes)")


def load_model(path: str) -> tuple[SFAFNet, "OrderedDict[str, np.ndarray]"]:
    """
    Rebuild a model from ``path``.

    Returns:
        The model and the records that are not model parameters.

    Raises:
        FileNotFoundError: ``path`` does not exist.
        DecodeError: The file is malformed.
    """
    with open(path, "rb") as f:
        config, tensors = decode(f.read())
    model = SFAFNet(config)
    own = {name for name, _ in model.named_parameters()}
    model.load_state_dict({name: tensors[name] for name in tensors if name in own})
    extra = OrderedDict((name, array) for name, array in tensors.items() if name not in own)
    logger.info(f"Loaded checkpoint {path} ({len(own)} parameters, {len(extra)} extra records)")
    return model, extra

"""Tests for sfafnet.checkpoint module."""

import os
import shutil
import struct
import tempfile
import unittest
from collections import OrderedDict

import numpy as np

from sfafnet.checkpoint import MAGIC, decode, encode, load_model, save_model
from sfafnet.errors import ConfigError, DecodeError
from sfafnet.network import ArchConfig, SFAFNet
from sfafnet.tensor import Tensor, no_grad


class TestCheckpointFormat(unittest.TestCase):
    def setUp(self):
        self.config = ArchConfig.preset("tiny")

    def test_header_layout(self):
        payload = encode(self.config, OrderedDict())
        self.assertEqual(payload[:4], MAGIC)
        version, length = struct.unpack("<II", payload[4:12])
        self.assertEqual(version, 1)
        self.assertEqual(len(payload), 12 + length)

    def test_record_layout(self):
        array = np.array([[1.0, 2.0, 3.0]], dtype=np.float32)
        payload = encode(self.config, OrderedDict(w=array))
        (config_len,) = struct.unpack("<I", payload[8:12])
        record = payload[12 + config_len:]
        self.assertEqual(struct.unpack("<I", record[:4]), (1,))
        self.assertEqual(record[4:5], b"w")
        self.assertEqual(struct.unpack("<BB", record[5:7]), (0, 2))
        self.assertEqual(struct.unpack("<II", record[7:15]), (1, 3))
        self.assertEqual(record[15:], array.astype("<f4").tobytes())

    def test_round_trip_is_bit_exact(self):
        tensors = OrderedDict(
            a=np.random.default_rng(0).standard_normal((2, 3)).astype(np.float32),
            b=np.random.default_rng(1).standard_normal(4),
            step=np.array(17, dtype=np.int64),
        )
        config, decoded = decode(encode(self.config, tensors))
        self.assertEqual(config, self.config)
        self.assertEqual(list(decoded), ["a", "b", "step"])
        for name in tensors:
            self.assertEqual(decoded[name].dtype, tensors[name].dtype)
            self.assertEqual(decoded[name].tobytes(), tensors[name].tobytes())

    # ---- malformed input ----

    def test_bad_magic(self):
        with self.assertRaises(DecodeError):
            decode(b"NOPE" + bytes(8))

    def test_bad_version(self):
        payload = bytearray(encode(self.config, OrderedDict()))
        payload[4:8] = struct.pack("<I", 2)
        with self.assertRaises(DecodeError):
            decode(bytes(payload))

    def test_truncated(self):
        payload = encode(self.config, OrderedDict(w=np.ones((4, 4), dtype=np.float32)))
        for cut in (3, 10, len(payload) - 1):
            with self.assertRaises(DecodeError):
                decode(payload[:cut])

    def test_unknown_dtype_tag(self):
        payload = bytearray(encode(self.config, OrderedDict(w=np.ones(2, dtype=np.float32))))
        (config_len,) = struct.unpack("<I", payload[8:12])
        payload[12 + config_len + 5] = 9
        with self.assertRaises(DecodeError):
            decode(bytes(payload))

    def test_invalid_embedded_config(self):
        bad = ArchConfig(base_channels=4, rows=3)
        with self.assertRaises(ConfigError):
            decode(encode(bad, OrderedDict()))

    def test_unsupported_dtype_on_encode(self):
        with self.assertRaises(DecodeError):
            encode(self.config, OrderedDict(w=np.ones(2, dtype=np.int8)))


class TestModelPersistence(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.path = os.path.join(self.tmpdir, "model.sfaf")

    def tearDown(self):
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def test_forward_outputs_identical_after_reload(self):
        model = SFAFNet(ArchConfig.preset("tiny"), seed=3)
        save_model(self.path, model)
        loaded, extra = load_model(self.path)
        self.assertEqual(len(extra), 0)
        self.assertEqual(loaded.config, model.config)
        image = Tensor(np.random.default_rng(0).uniform(size=(1, 3, 16, 16)).astype(np.float32))
        with no_grad():
            before = model(image)
            after = loaded(image)
        for a, b in zip(before, after):
            self.assertEqual(a.data.tobytes(), b.data.tobytes())

    def test_extra_records_returned(self):
        model = SFAFNet(ArchConfig.preset("tiny"))
        save_model(self.path, model, extra={"optim.step": np.array(5, dtype=np.int64)})
        _, extra = load_model(self.path)
        self.assertEqual(int(extra["optim.step"]), 5)

    def test_extra_name_collision(self):
        model = SFAFNet(ArchConfig.preset("tiny"))
        with self.assertRaises(DecodeError):
            save_model(self.path, model, extra={"stem.weight": np.zeros(1, dtype=np.float32)})

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_model(os.path.join(self.tmpdir, "absent.sfaf"))

    def test_no_temporary_file_left(self):
        save_model(self.path, SFAFNet(ArchConfig.preset("tiny")))
        self.assertEqual(os.listdir(self.tmpdir), ["model.sfaf"])


if __name__ == "__main__":
    unittest.main()

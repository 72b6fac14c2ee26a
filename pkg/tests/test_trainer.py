"""Tests for sfafnet.trainer module."""

import csv
import os
import shutil
import tempfile
import unittest

import numpy as np

from sfafnet.checkpoint import load_model
from sfafnet.data import BlurKind, make_blur_pair, synth_texture
from sfafnet.errors import ConfigError, ContractError, DimensionError, NonFiniteError
from sfafnet.losses import LossConfig
from sfafnet.network import ArchConfig, SFAFNet
from sfafnet.tensor import Parameter
from sfafnet.trainer import LOG_COLUMNS, OptimState, TrainConfig, Trainer, adam_step, clip_grad_norm, cosine_lr


def small_pairs(count=2, size=16):
    return [
        make_blur_pair(synth_texture(size, [9, i]), BlurKind.gaussian(1.0), id=f"{i:04d}") for i in range(count)
    ]


def small_config(**overrides):
    values = dict(batch_size=2, patch_size=16, total_steps=6, seed=0)
    values.update(overrides)
    return TrainConfig(**values)


class TestSchedule(unittest.TestCase):
    def test_endpoints(self):
        cfg = TrainConfig(total_steps=100)
        self.assertAlmostEqual(cosine_lr(0, cfg), 2e-4)
        self.assertAlmostEqual(cosine_lr(100, cfg), 1e-6)
        self.assertAlmostEqual(cosine_lr(50, cfg), (2e-4 + 1e-6) / 2)

    def test_monotone(self):
        cfg = TrainConfig(total_steps=50)
        values = [cosine_lr(t, cfg) for t in range(51)]
        self.assertTrue(all(b <= a for a, b in zip(values, values[1:])))

    def test_out_of_range(self):
        with self.assertRaises(ContractError):
            cosine_lr(-1, TrainConfig(total_steps=10))
        with self.assertRaises(ContractError):
            cosine_lr(11, TrainConfig(total_steps=10))

    def test_config_validation(self):
        for bad in (
            TrainConfig(lr_final=1.0),
            TrainConfig(beta1=1.0),
            TrainConfig(batch_size=0),
            TrainConfig(patch_size=18),
            TrainConfig(clip_grad=0.0),
        ):
            with self.assertRaises(ConfigError):
                bad.validate()


class TestAdam(unittest.TestCase):
    def setUp(self):
        self.cfg = TrainConfig()
        self.param = Parameter(np.array([1.0, -2.0, 3.0]))

    # ---- update rule ----

    def test_zero_gradient_leaves_parameters(self):
        state = OptimState()
        adam_step({"w": self.param}, {"w": np.zeros(3)}, state, 1e-3, self.cfg)
        np.testing.assert_array_equal(self.param.data, [1.0, -2.0, 3.0])
        self.assertEqual(state.t, 1)

    def test_missing_gradient_counts_as_zero(self):
        adam_step({"w": self.param}, {}, OptimState(), 1e-3, self.cfg)
        np.testing.assert_array_equal(self.param.data, [1.0, -2.0, 3.0])

    def test_first_step_moves_by_lr_against_sign(self):
        grad = np.array([0.5, -4.0, 1e-2])
        adam_step({"w": self.param}, {"w": grad}, OptimState(), 1e-2, self.cfg)
        np.testing.assert_allclose(self.param.data - [1.0, -2.0, 3.0], -1e-2 * np.sign(grad), rtol=1e-4)

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            adam_step({"w": self.param}, {"w": np.zeros(2)}, OptimState(), 1e-3, self.cfg)

    # ---- state ----

    def test_state_records_round_trip(self):
        state = OptimState()
        adam_step({"w": self.param}, {"w": np.ones(3)}, state, 1e-3, self.cfg)
        restored = OptimState.from_records(state.to_records())
        self.assertEqual(restored.t, 1)
        np.testing.assert_array_equal(restored.m["w"], state.m["w"])
        np.testing.assert_array_equal(restored.v["w"], state.v["w"])

    def test_clip_grad_norm(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        self.assertAlmostEqual(clip_grad_norm(grads, 1.0), 5.0)
        self.assertAlmostEqual(float(np.hypot(grads["a"][0], grads["b"][0])), 1.0, places=6)


class TestTrainer(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.pairs = small_pairs()

    def tearDown(self):
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def make_trainer(self, cfg=None, **kwargs):
        model = SFAFNet(ArchConfig.preset("tiny"), seed=0)
        return Trainer(model, self.pairs, cfg or small_config(), **kwargs)

    # ---- batches ----

    def test_sample_batch_shapes_and_determinism(self):
        trainer = self.make_trainer()
        images, targets = trainer.sample_batch(2)
        again, _ = trainer.sample_batch(2)
        self.assertEqual(images.shape, (2, 3, 16, 16))
        self.assertEqual([t.shape[-1] for t in targets], [16, 16, 8, 4])
        np.testing.assert_array_equal(images.data, again.data)

    # ---- determinism / resume ----

    def test_two_runs_are_identical(self):
        first, second = self.make_trainer(), self.make_trainer()
        rows_a = first.run(until=3)
        rows_b = second.run(until=3)
        self.assertEqual([r["loss_total"] for r in rows_a], [r["loss_total"] for r in rows_b])
        for (name, a), (_, b) in zip(first.model.named_parameters(), second.model.named_parameters()):
            np.testing.assert_array_equal(a.data, b.data, err_msg=name)

    def test_resume_matches_unbroken_run(self):
        path = os.path.join(self.tmpdir, "run.sfaf")
        unbroken = self.make_trainer()
        unbroken.run()

        interrupted = self.make_trainer(ckpt_path=path)
        interrupted.run(until=3)
        model, extra = load_model(path)
        resumed = Trainer(model, self.pairs, small_config())
        resumed.restore_state(extra)
        self.assertEqual(resumed.state.t, 3)
        rows = resumed.run()
        self.assertEqual([r["step"] for r in rows], [4, 5, 6])
        self.assertEqual(rows[-1]["loss_total"], unbroken.history[-1]["loss_total"])
        for (name, a), (_, b) in zip(unbroken.model.named_parameters(), resumed.model.named_parameters()):
            np.testing.assert_array_equal(a.data, b.data, err_msg=name)

    def test_loss_settings_survive_resume(self):
        path = os.path.join(self.tmpdir, "run.sfaf")
        charbonnier_only = LossConfig(lambda_freq=0.0, delta_edge=0.0)
        self.make_trainer(ckpt_path=path, loss_cfg=charbonnier_only).run(until=2)
        model, extra = load_model(path)
        resumed = Trainer(model, self.pairs, small_config())
        resumed.restore_state(extra)
        self.assertEqual(resumed.loss_cfg, charbonnier_only)
        row = resumed.train_step(resumed.state.t)
        self.assertAlmostEqual(row["loss_total"], row["loss_char"], places=5)

    # ---- training ----

    def test_short_run_reduces_loss(self):
        pairs = small_pairs(count=1)
        cfg = small_config(batch_size=1, total_steps=25, lr_init=1e-3, lr_final=1e-3)
        trainer = Trainer(SFAFNet(ArchConfig.preset("tiny"), seed=0), pairs, cfg)
        rows = trainer.run()
        first = rows[0]["loss_total"]
        last = np.mean([r["loss_total"] for r in rows[-3:]])
        self.assertLess(last, first)

    # ---- non-finite diagnostics ----

    def test_nan_parameter_is_reported(self):
        trainer = self.make_trainer()
        trainer.model.stem.weight.data[0, 0, 0, 0] = np.nan
        with self.assertRaises(NonFiniteError) as ctx:
            trainer.train_step(0)
        self.assertEqual(ctx.exception.tensor_name, "stem.weight")
        self.assertIn("stem.weight", str(ctx.exception))

    def test_nan_input_is_reported(self):
        pairs = small_pairs()
        pairs[0].degraded[0, 0, 0] = np.nan
        trainer = Trainer(SFAFNet(ArchConfig.preset("tiny"), seed=0), pairs[:1], small_config(batch_size=1))
        with self.assertRaises(NonFiniteError) as ctx:
            trainer.train_step(0)
        self.assertEqual(ctx.exception.tensor_name, "input")

    # ---- logging / validation ----

    def test_csv_log(self):
        log_path = os.path.join(self.tmpdir, "train.csv")
        trainer = self.make_trainer(
            small_config(total_steps=2, val_every=1), val_pairs=self.pairs[:1], log_path=log_path
        )
        trainer.run()
        with open(log_path, newline="") as f:
            rows = list(csv.DictReader(f))
        self.assertEqual(list(rows[0]), LOG_COLUMNS)
        self.assertEqual([r["step"] for r in rows], ["1", "2"])
        self.assertGreater(float(rows[1]["val_psnr"]), 0.0)

    def test_patch_larger_than_images(self):
        with self.assertRaises(ConfigError):
            self.make_trainer(small_config(patch_size=32))

    def test_restore_rejects_future_step(self):
        trainer = self.make_trainer()
        with self.assertRaises(ContractError):
            trainer.restore_state({"optim.step": np.array(100, dtype=np.int64)})


if __name__ == "__main__":
    unittest.main()

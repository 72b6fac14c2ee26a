"""Tests for sfafnet.data module."""

import os
import shutil
import tempfile
import unittest

import numpy as np

from sfafnet.data import (
    BlurKind,
    DatasetManifest,
    ImagePair,
    augment,
    convolve,
    extract_patches,
    flip,
    gaussian_kernel,
    linear_motion_kernel,
    make_blur_pair,
    split_dir,
    synth_texture,
    target_pyramid,
    write_corpus,
)
from sfafnet.errors import ConfigError, ContractError, DimensionError
from sfafnet.metrics import psnr


class TestBlur(unittest.TestCase):
    def test_gaussian_kernel(self):
        kernel = gaussian_kernel(1.0)
        self.assertEqual(kernel.shape, (7, 7))
        self.assertAlmostEqual(kernel.sum(), 1.0)
        np.testing.assert_allclose(kernel, kernel.T)

    def test_delta_image_gives_kernel(self):
        image = np.zeros((3, 15, 15))
        image[:, 7, 7] = 1.0
        kernel = gaussian_kernel(1.0)
        blurred = convolve(image, kernel)
        for channel in range(3):
            np.testing.assert_allclose(blurred[channel, 4:11, 4:11], kernel, atol=1e-12)

    def test_motion_kernel_is_normalised(self):
        for length, angle in ((5, 0.0), (7, 45.0), (4, 90.0)):
            kernel = linear_motion_kernel(length, angle)
            self.assertAlmostEqual(kernel.sum(), 1.0)
            self.assertEqual(kernel.shape[0] % 2, 1)
        horizontal = linear_motion_kernel(5, 0.0)
        self.assertEqual(np.count_nonzero(horizontal), 5)
        self.assertEqual(np.count_nonzero(horizontal[2]), 5)

    def test_constant_image_unchanged(self):
        sharp = np.full((3, 16, 16), 0.4, dtype=np.float32)
        pair = make_blur_pair(sharp, BlurKind.gaussian(2.0))
        np.testing.assert_allclose(pair.degraded, sharp, atol=1e-6)

    def test_stronger_blur_lowers_psnr(self):
        sharp = synth_texture(32, 0)
        values = [psnr(make_blur_pair(sharp, BlurKind.gaussian(s)).degraded, sharp) for s in (0.5, 1.0, 2.0)]
        self.assertTrue(values[0] > values[1] > values[2])

    def test_noise_is_seeded(self):
        sharp = synth_texture(16, 0)
        a = make_blur_pair(sharp, BlurKind.gaussian(1.0), seed=3, noise_sigma=0.05)
        b = make_blur_pair(sharp, BlurKind.gaussian(1.0), seed=3, noise_sigma=0.05)
        np.testing.assert_array_equal(a.degraded, b.degraded)
        self.assertGreaterEqual(a.degraded.min(), 0.0)
        self.assertLessEqual(a.degraded.max(), 1.0)

    def test_parse(self):
        self.assertEqual(BlurKind.parse("gaussian:1.5"), BlurKind.gaussian(1.5))
        self.assertEqual(BlurKind.parse("motion:9:30"), BlurKind.linear_motion(9, 30.0))
        self.assertEqual(BlurKind.parse("motion:5").angle, 0.0)
        for bad in ("box:3", "gaussian:x", "motion:"):
            with self.assertRaises(ConfigError):
                BlurKind.parse(bad)
        with self.assertRaises(ContractError):
            BlurKind.parse("gaussian:0")


class TestPairs(unittest.TestCase):
    def setUp(self):
        sharp = synth_texture(32, 1)
        self.pair = make_blur_pair(sharp, BlurKind.gaussian(1.0), id="0001")

    def test_mismatched_shapes(self):
        with self.assertRaises(DimensionError):
            ImagePair(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))

    def test_full_size_patch_is_the_image(self):
        (patch,) = extract_patches(self.pair, 32, 1, seed=0)
        np.testing.assert_array_equal(patch.sharp, self.pair.sharp)
        self.assertEqual(patch.id, "0001@0,0")

    def test_patches_deterministic(self):
        a = extract_patches(self.pair, 8, 5, seed=[1, 2])
        b = extract_patches(self.pair, 8, 5, seed=[1, 2])
        self.assertEqual([p.id for p in a], [p.id for p in b])

    def test_patches_stay_in_bounds(self):
        patches = extract_patches(self.pair, 12, 10000, seed=4)
        corners = np.array([[int(v) for v in p.id.split("@")[1].split(",")] for p in patches])
        self.assertGreaterEqual(corners.min(), 0)
        self.assertLessEqual(corners.max(), 20)
        self.assertTrue(all(p.sharp.shape == (3, 12, 12) for p in patches[:50]))

    def test_patch_too_large(self):
        with self.assertRaises(ContractError):
            extract_patches(self.pair, 33, 1)

    def test_double_flip_is_identity(self):
        back = flip(flip(self.pair, True, True), True, True)
        np.testing.assert_array_equal(back.degraded, self.pair.degraded)
        np.testing.assert_array_equal(back.sharp, self.pair.sharp)

    def test_flip_keeps_pair_aligned(self):
        flipped = flip(self.pair, True, False)
        self.assertAlmostEqual(
            psnr(flipped.degraded, flipped.sharp), psnr(self.pair.degraded, self.pair.sharp), places=9
        )

    def test_augment_deterministic(self):
        a, b = augment(self.pair, seed=[5, 1]), augment(self.pair, seed=[5, 1])
        np.testing.assert_array_equal(a.sharp, b.sharp)

    def test_target_pyramid(self):
        targets = target_pyramid(self.pair.sharp)
        self.assertEqual([t.shape for t in targets], [(3, 32, 32), (3, 32, 32), (3, 16, 16), (3, 8, 8)])
        self.assertAlmostEqual(float(targets[3][0, 0, 0]), float(self.pair.sharp[0, :4, :4].mean()), places=6)
        with self.assertRaises(DimensionError):
            target_pyramid(np.zeros((3, 30, 32)))


class TestCorpus(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def test_synth_texture(self):
        a, b = synth_texture(16, 7), synth_texture(16, 7)
        np.testing.assert_array_equal(a, b)
        self.assertEqual(a.dtype, np.float32)
        self.assertTrue(0.0 <= a.min() and a.max() <= 1.0)
        self.assertFalse(np.array_equal(a, synth_texture(16, 8)))

    def test_write_and_scan(self):
        train, test = write_corpus(self.tmpdir, count=4, size=16, seed=0)
        self.assertEqual((len(train), len(test)), (3, 1))
        self.assertEqual(
            sorted(os.listdir(os.path.join(self.tmpdir, "test"))), ["blur_0003.ppm", "sharp_0003.ppm"]
        )
        pairs = train.load()
        self.assertEqual([p.id for p in pairs], ["0000", "0001", "0002"])
        self.assertEqual(pairs[0].sharp.shape, (3, 16, 16))
        self.assertEqual(split_dir(self.tmpdir, "train"), os.path.join(self.tmpdir, "train"))
        self.assertEqual(split_dir(self.tmpdir, "val"), self.tmpdir)

    def test_corpus_is_reproducible(self):
        write_corpus(os.path.join(self.tmpdir, "a"), count=2, size=16, seed=1)
        write_corpus(os.path.join(self.tmpdir, "b"), count=2, size=16, seed=1)
        for name in ("blur_0000.ppm", "sharp_0000.ppm"):
            with open(os.path.join(self.tmpdir, "a", "train", name), "rb") as f:
                first = f.read()
            with open(os.path.join(self.tmpdir, "b", "train", name), "rb") as f:
                self.assertEqual(f.read(), first)

    def test_missing_partner(self):
        write_corpus(self.tmpdir, count=2, size=16)
        os.remove(os.path.join(self.tmpdir, "train", "sharp_0000.ppm"))
        with self.assertRaises(FileNotFoundError):
            DatasetManifest.scan(os.path.join(self.tmpdir, "train"))

    def test_missing_directory(self):
        with self.assertRaises(FileNotFoundError):
            DatasetManifest.scan(os.path.join(self.tmpdir, "nowhere"))

    def test_corpus_too_small(self):
        with self.assertRaises(ConfigError):
            write_corpus(self.tmpdir, count=1)


if __name__ == "__main__":
    unittest.main()

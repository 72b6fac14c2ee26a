"""Tests for sfafnet.ops module."""

import unittest

import numpy as np

from sfafnet import ops
from sfafnet.errors import ConfigError, ContractError, DimensionError
from sfafnet.gradcheck import check_gradients
from sfafnet.tensor import Tensor


def loop_conv2d(x, w, b, stride=1, groups=1, pad=0, mode="constant"):
    """Direct nested-loop cross-correlation used as the oracle."""
    x = np.pad(x, [(0, 0), (0, 0), (pad, pad), (pad, pad)], mode=mode)
    n, c_in, height, width = x.shape
    c_out, group_in, k, _ = w.shape
    group_out = c_out // groups
    out_h = (height - k) // stride + 1
    out_w = (width - k) // stride + 1
    out = np.zeros((n, c_out, out_h, out_w))
    for b_i in range(n):
        for o in range(c_out):
            g = o // group_out
            for i in range(out_h):
                for j in range(out_w):
                    patch = x[b_i, g * group_in:(g + 1) * group_in,
                              i * stride:i * stride + k, j * stride:j * stride + k]
                    out[b_i, o, i, j] = np.sum(patch * w[o]) + (b[o] if b is not None else 0.0)
    return out


def naive_dft2(x):
    m, n = x.shape[-2:]
    rows = np.exp(-2j * np.pi * np.outer(np.arange(m), np.arange(m)) / m)
    cols = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n)
    return rows @ x @ cols.T


class TestConvolution(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    # ---- conv2d ----

    def test_matches_loop_oracle(self):
        x = self.rng.standard_normal((2, 3, 7, 6))
        w = self.rng.standard_normal((4, 3, 3, 3))
        b = self.rng.standard_normal(4)
        out = ops.conv2d(Tensor(x), Tensor(w), Tensor(b))
        np.testing.assert_allclose(out.data, loop_conv2d(x, w, b, pad=1), atol=1e-10)

    def test_stride_two(self):
        x = self.rng.standard_normal((1, 2, 8, 8))
        w = self.rng.standard_normal((3, 2, 3, 3))
        out = ops.conv2d(Tensor(x), Tensor(w), stride=2)
        self.assertEqual(out.shape, (1, 3, 4, 4))
        np.testing.assert_allclose(out.data, loop_conv2d(x, w, None, stride=2, pad=1), atol=1e-10)

    def test_depthwise_reflect(self):
        x = self.rng.standard_normal((1, 4, 5, 5))
        w = self.rng.standard_normal((4, 1, 3, 3))
        out = ops.conv2d(Tensor(x), Tensor(w), padding_mode="reflect", groups=4)
        np.testing.assert_allclose(out.data, loop_conv2d(x, w, None, groups=4, pad=1, mode="reflect"), atol=1e-10)

    def test_grouped(self):
        x = self.rng.standard_normal((1, 4, 4, 4))
        w = self.rng.standard_normal((6, 2, 1, 1))
        out = ops.conv2d(Tensor(x), Tensor(w), groups=2)
        np.testing.assert_allclose(out.data, loop_conv2d(x, w, None, groups=2), atol=1e-10)

    def test_linear_in_input(self):
        x = self.rng.standard_normal((2, 3, 6, 6))
        y = self.rng.standard_normal((2, 3, 6, 6))
        w = Tensor(self.rng.standard_normal((4, 3, 3, 3)))
        for mode in ("zero", "reflect"):
            def conv(v, mode=mode):
                return ops.conv2d(Tensor(v), w, padding_mode=mode).data

            np.testing.assert_allclose(conv(2.5 * x - 0.75 * y), 2.5 * conv(x) - 0.75 * conv(y), atol=1e-10)

    def test_shape_errors(self):
        x = Tensor(np.zeros((1, 3, 4, 4)))
        with self.assertRaises(DimensionError):
            ops.conv2d(x, Tensor(np.zeros((2, 2, 3, 3))))
        with self.assertRaises(ConfigError):
            ops.conv2d(x, Tensor(np.zeros((2, 1, 3, 3))), groups=2)
        with self.assertRaises(ConfigError):
            ops.conv2d(x, Tensor(np.zeros((2, 3, 3, 3))), padding_mode="circular")

    def test_gradients(self):
        x = Tensor(self.rng.standard_normal((1, 2, 5, 5)), requires_grad=True)
        w = Tensor(self.rng.standard_normal((4, 1, 3, 3)), requires_grad=True)
        b = Tensor(self.rng.standard_normal(4), requires_grad=True)
        proj = Tensor(self.rng.standard_normal((1, 4, 3, 3)))
        results = check_gradients(
            lambda: (ops.conv2d(x, w, b, stride=2, groups=2, padding_mode="reflect") * proj).sum(),
            {"x": x, "w": w, "b": b},
            samples=10,
        )
        for r in results:
            self.assertTrue(r.passed, f"{r.name}: {r.rel_error}")

    def test_reflect_pad_adjoint(self):
        x = Tensor(self.rng.standard_normal((1, 1, 4, 5)), requires_grad=True)
        proj = Tensor(self.rng.standard_normal((1, 1, 8, 9)))
        results = check_gradients(lambda: (ops.pad2d(x, 2, "reflect") * proj).sum(), {"x": x}, samples=20)
        self.assertTrue(results[0].passed, results[0].rel_error)

    # ---- dynamic filter ----

    def test_dynamic_filter_groups(self):
        x = self.rng.standard_normal((2, 4, 5, 5))
        kernels = self.rng.uniform(size=(2, 2, 3, 3))
        out = ops.dynamic_filter(Tensor(x), Tensor(kernels))
        for n in range(2):
            for c in range(4):
                expected = loop_conv2d(x[n:n + 1, c:c + 1], kernels[n, c // 2][None, None], None,
                                       pad=1, mode="reflect")
                np.testing.assert_allclose(out.data[n, c], expected[0, 0], atol=1e-10)

    def test_dynamic_filter_row_mismatch(self):
        with self.assertRaises(DimensionError):
            ops.dynamic_filter(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.ones((2, 3, 3))))


class TestNormalizationAndPooling(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(1)

    # ---- softmax ----

    def test_softmax_sums_to_one(self):
        x = Tensor(self.rng.standard_normal((3, 5)) * 50.0)
        y = ops.softmax(x, axis=1).data
        self.assertTrue((y >= 0).all())
        np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-6)

    def test_softmax_known_values(self):
        y = ops.softmax(Tensor(np.array([0.0, np.log(3.0)])), axis=0).data
        np.testing.assert_allclose(y, [0.25, 0.75], atol=1e-12)

    def test_softmax_bad_axis(self):
        with self.assertRaises(DimensionError):
            ops.softmax(Tensor(np.zeros((2, 2))), axis=2)

    # ---- layer norm ----

    def test_layer_norm_statistics(self):
        x = Tensor(self.rng.standard_normal((2, 6, 3, 3)) * 4.0 + 1.0)
        y = ops.layer_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6))).data
        np.testing.assert_allclose(y.mean(axis=1), 0.0, atol=1e-8)
        np.testing.assert_allclose(y.var(axis=1), 1.0, atol=1e-4)

    def test_layer_norm_eps_must_be_positive(self):
        with self.assertRaises(ContractError):
            ops.layer_norm(Tensor(np.zeros((1, 2, 1, 1))), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=0.0)

    # ---- pooling / resampling ----

    def test_pool_stats(self):
        x = self.rng.standard_normal((2, 3, 4, 5))
        np.testing.assert_allclose(ops.pool_stats(Tensor(x), "gap").data[..., 0, 0], x.mean(axis=(2, 3)))
        np.testing.assert_allclose(ops.pool_stats(Tensor(x), "gsp").data[..., 0, 0], x.std(axis=(2, 3)))
        with self.assertRaises(ConfigError):
            ops.pool_stats(Tensor(x), "max")

    def test_pool_std_constant_map_has_zero_gradient(self):
        x = Tensor(np.full((1, 2, 4, 4), 0.5), requires_grad=True)
        ops.pool_stats(x, "gsp").sum().backward()
        np.testing.assert_array_equal(x.grad, 0.0)

    def test_resample(self):
        x = self.rng.standard_normal((1, 2, 4, 6))
        down = ops.resample(Tensor(x), "down2").data
        np.testing.assert_allclose(down[0, 0, 0, 0], x[0, 0, :2, :2].mean())
        up = ops.resample(Tensor(down), "up2").data
        self.assertEqual(up.shape, x.shape)
        np.testing.assert_array_equal(up[0, 1, 2:4, 2:4], down[0, 1, 1, 1])
        with self.assertRaises(DimensionError):
            ops.resample(Tensor(np.zeros((1, 1, 3, 4))), "down2")

    def test_adaptive_avg_pool(self):
        x = np.arange(36, dtype=np.float64).reshape(1, 1, 6, 6)
        pooled = ops.adaptive_avg_pool2d(Tensor(x), 3, 3).data
        np.testing.assert_allclose(pooled[0, 0, 0, 0], x[0, 0, :2, :2].mean())
        uneven = ops.adaptive_avg_pool2d(Tensor(np.ones((1, 1, 5, 7))), 3, 3).data
        np.testing.assert_allclose(uneven, 1.0)

    # ---- shape ops ----

    def test_split_and_concat(self):
        x = Tensor(np.arange(12.0).reshape(1, 6, 1, 2))
        parts = ops.split(x, 3, axis=1)
        self.assertEqual([p.shape for p in parts], [(1, 2, 1, 2)] * 3)
        np.testing.assert_array_equal(ops.concat(parts, axis=1).data, x.data)
        with self.assertRaises(DimensionError):
            ops.split(x, 4, axis=1)
        with self.assertRaises(DimensionError):
            ops.concat([Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 2)))], axis=1)

    def test_matmul_shape_error(self):
        with self.assertRaises(DimensionError):
            ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_matmul_matches_triple_loop(self):
        a = self.rng.standard_normal((2, 3, 4))
        b = self.rng.standard_normal((2, 4, 5))
        expected = np.zeros((2, 3, 5))
        for n in range(2):
            for i in range(3):
                for j in range(5):
                    for k in range(4):
                        expected[n, i, j] += a[n, i, k] * b[n, k, j]
        np.testing.assert_allclose(ops.matmul(Tensor(a), Tensor(b)).data, expected, atol=1e-12)

    def test_clip(self):
        x = Tensor(np.array([-1.0, 0.25, 2.0]), requires_grad=True)
        y = ops.clip(x, 0.0, 1.0)
        np.testing.assert_array_equal(y.data, [0.0, 0.25, 1.0])
        y.sum().backward()
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])
        with self.assertRaises(ContractError):
            ops.clip(x, 1.0, 0.0)


class TestFourier(unittest.TestCase):
    def test_fft2_matches_naive_dft(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = rng.standard_normal((8, 8))
            np.testing.assert_allclose(ops.fft2(x), naive_dft2(x), atol=1e-4)

    def test_non_power_of_two_falls_back(self):
        x = np.random.default_rng(3).standard_normal((2, 6, 5))
        np.testing.assert_allclose(ops.fft2(x), naive_dft2(x), atol=1e-9)

    def test_parseval(self):
        x = np.random.default_rng(4).standard_normal((16, 16))
        energy = np.sum(np.abs(ops.fft2(x)) ** 2) / x.size
        self.assertLess(abs(energy - np.sum(x ** 2)) / np.sum(x ** 2), 1e-3)

    def test_spectrum_gradient(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=True)
        proj = Tensor(rng.standard_normal((2, 1, 2, 4, 4)))
        results = check_gradients(lambda: (ops.spectrum2d(x) * proj).sum(), {"x": x}, samples=12)
        self.assertTrue(results[0].passed, results[0].rel_error)


if __name__ == "__main__":
    unittest.main()

"""
Differentiable operations on Tensors.

Every operation the network uses lives here: elementwise arithmetic,
reductions, reshaping, matmul, concatenation and splitting, padding,
grouped convolution, per-sample dynamic filtering, softmax, channel-wise
layer normalization, global pooling statistics, 2x resampling, adaptive
average pooling, and a 2-D DFT (radix-2 fast path with a naive fallback).

Layout is N x C x H x W throughout.
"""

from __future__ import annotations

import logging
from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ContractError, DimensionError
from .tensor import Function, Tensor

logger = logging.getLogger(__name__)

Axis = Union[int, tuple[int, ...], None]

PADDING_MODES = ("zero", "reflect")


# ----------------------------------------------------------------------
# Elementwise arithmetic
# ----------------------------------------------------------------------


class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return (
            self.unbroadcast(grad, self.shapes[0]),
            self.unbroadcast(grad, self.shapes[1]),
        )


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return (
            self.unbroadcast(grad, self.shapes[0]),
            self.unbroadcast(-grad, self.shapes[1]),
        )


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        ga = self.unbroadcast(grad * self.b, self.a.shape) if self.inputs[0].requires_grad else None
        gb = self.unbroadcast(grad * self.a, self.b.shape) if self.inputs[1].requires_grad else None
        return ga, gb


class Div(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        ga = self.unbroadcast(grad / self.b, self.a.shape)
        gb = self.unbroadcast(-grad * self.a / (self.b * self.b), self.b.shape)
        return ga, gb


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Sqrt(Function):
    def forward(self, a):
        self.out = np.sqrt(a)
        return self.out

    def backward(self, grad):
        return (grad / (2.0 * self.out),)


class Abs(Function):
    def forward(self, a):
        self.sign = np.sign(a)
        return np.abs(a)

    def backward(self, grad):
        return (grad * self.sign,)


class Sigmoid(Function):
    def forward(self, a):
        # exp(-softplus(-a)) never overflows
        self.out = np.exp(-np.logaddexp(0.0, -a)).astype(a.dtype, copy=False)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Clip(Function):
    def forward(self, a, low=0.0, high=1.0):
        self.inside = (a >= low) & (a <= high)
        return np.clip(a, low, high)

    def backward(self, grad):
        return (grad * self.inside,)


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Sub.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(a, b)


def div(a: Tensor, b: Tensor) -> Tensor:
    return Div.apply(a, b)


def neg(a: Tensor) -> Tensor:
    return Neg.apply(a)


def sqrt(a: Tensor) -> Tensor:
    return Sqrt.apply(a)


def abs(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return Abs.apply(a)


def sigmoid(a: Tensor) -> Tensor:
    return Sigmoid.apply(a)


def clip(a: Tensor, low: float, high: float) -> Tensor:
    """Clamp into [low, high]; the gradient is zero where clamping applied."""
    if low > high:
        raise ContractError(f"clip needs low <= high, got {low} > {high}")
    return Clip.apply(a, low=low, high=high)


# ----------------------------------------------------------------------
# Reductions and shape manipulation
# ----------------------------------------------------------------------


class Sum(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.in_shape = a.shape
        self.axis = axis
        self.keepdims = keepdims
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            axes = (self.axis,) if isinstance(self.axis, int) else self.axis
            axes = tuple(ax % len(self.in_shape) for ax in axes)
            grad = np.expand_dims(grad, axes)
        return (np.broadcast_to(grad, self.in_shape).copy(),)


class Reshape(Function):
    def forward(self, a, shape=()):
        self.in_shape = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class Transpose(Function):
    def forward(self, a, axes=None):
        self.axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
        return np.transpose(a, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class Matmul(Function):
    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2:
            raise DimensionError(f"matmul needs >= 2-D operands, got {a.shape} and {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        ga = gb = None
        if self.inputs[0].requires_grad:
            ga = self.unbroadcast(grad @ np.swapaxes(self.b, -1, -2), self.a.shape)
        if self.inputs[1].requires_grad:
            gb = self.unbroadcast(np.swapaxes(self.a, -1, -2) @ grad, self.b.shape)
        return ga, gb


class Concat(Function):
    def forward(self, *arrays, axis=1):
        self.axis = axis
        self.sizes = [arr.shape[axis] for arr in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        bounds = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


class Slice(Function):
    def forward(self, a, axis=1, start=0, stop=None):
        self.in_shape = a.shape
        self.index = [slice(None)] * a.ndim
        self.index[axis] = slice(start, stop)
        self.index = tuple(self.index)
        return a[self.index]

    def backward(self, grad):
        full = np.zeros(self.in_shape, dtype=grad.dtype)
        full[self.index] = grad
        return (full,)


def sum(a: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(a, axis=axis, keepdims=keepdims)


def mean(a: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return Sum.apply(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(a, shape=tuple(shape))


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    return Transpose.apply(a, axes=axes)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return Matmul.apply(a, b)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Concatenate along ``axis``; all other dimensions must agree."""
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    reference = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(reference) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, reference)) if i != axis % len(reference)
        ):
            raise DimensionError(f"concat shape mismatch: {reference} vs {t.shape} on axis {axis}")
    return Concat.apply(*tensors, axis=axis)


def split(a: Tensor, parts: int, axis: int = 1) -> list[Tensor]:
    """Split into ``parts`` equal chunks along ``axis``."""
    length = a.shape[axis]
    if parts < 1 or length % parts:
        raise DimensionError(f"cannot split axis of length {length} into {parts} parts")
    step = length // parts
    return [Slice.apply(a, axis=axis, start=i * step, stop=(i + 1) * step) for i in range(parts)]


# ----------------------------------------------------------------------
# Padding and convolution
# ----------------------------------------------------------------------


class Pad2d(Function):
    """Pad the last two axes by ``pad`` on every side (zero or reflect)."""

    def forward(self, a, pad=1, mode="zero"):
        self.pad = pad
        self.mode = mode
        self.in_shape = a.shape
        widths = [(0, 0)] * (a.ndim - 2) + [(pad, pad), (pad, pad)]
        if mode == "reflect":
            return np.pad(a, widths, mode="reflect")
        return np.pad(a, widths, mode="constant")

    def backward(self, grad):
        p = self.pad
        height, width = self.in_shape[-2:]
        if self.mode == "zero":
            return (grad[..., p:p + height, p:p + width].copy(),)
        folded = _fold_reflect(grad, grad.ndim - 2, p, height)
        return (_fold_reflect(folded, grad.ndim - 1, p, width),)


def _fold_reflect(grad: np.ndarray, axis: int, pad: int, size: int) -> np.ndarray:
    """Adjoint of reflect padding along one axis: add mirrored borders back."""
    moved = np.moveaxis(grad, axis, 0)
    out = moved[pad:pad + size].copy()
    source = np.pad(np.arange(size), pad, mode="reflect")
    for i in list(range(pad)) + list(range(pad + size, size + 2 * pad)):
        out[source[i]] += moved[i]
    return np.moveaxis(out, 0, axis)


class Conv2dValid(Function):
    """Grouped cross-correlation without padding; optional bias as third input."""

    def forward(self, x, weight, bias=None, stride=1, groups=1):
        n, channels, height, width = x.shape
        out_channels, group_in, k, _ = weight.shape
        self.stride, self.groups = stride, groups
        self.x_shape = x.shape
        self.has_bias = bias is not None
        out_h = (height - k) // stride + 1
        out_w = (width - k) // stride + 1
        self.out_hw = (out_h, out_w)
        windows = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
        if groups == 1:
            self.windows = windows
            self.weight = weight
            out = np.tensordot(windows, weight, axes=([1, 4, 5], [1, 2, 3]))
            out = out.transpose(0, 3, 1, 2)
        else:
            self.windows = windows.reshape(n, groups, group_in, out_h, out_w, k, k)
            self.weight = weight.reshape(groups, out_channels // groups, group_in, k, k)
            out = np.einsum("ngchwij,gocij->ngohw", self.windows, self.weight, optimize=True)
            out = out.reshape(n, out_channels, out_h, out_w)
        if bias is not None:
            out = out + bias.reshape(1, -1, 1, 1)
        return np.ascontiguousarray(out)

    def backward(self, grad):
        n, channels, height, width = self.x_shape
        out_h, out_w = self.out_hw
        s = self.stride
        if self.groups == 1:
            k = self.weight.shape[-1]
            grad_w = np.tensordot(grad, self.windows, axes=([0, 2, 3], [0, 2, 3]))
            grad_win = np.tensordot(grad, self.weight, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
        else:
            groups, group_out, group_in, k, _ = self.weight.shape
            g = grad.reshape(n, groups, group_out, out_h, out_w)
            grad_w = np.einsum("ngohw,ngchwij->gocij", g, self.windows, optimize=True)
            grad_w = grad_w.reshape(groups * group_out, group_in, k, k)
            grad_win = np.einsum("ngohw,gocij->ngchwij", g, self.weight, optimize=True)
            grad_win = grad_win.reshape(n, channels, out_h, out_w, k, k)
        grad_x = _fold_windows(grad_win, self.x_shape, s)
        if self.has_bias:
            return grad_x, grad_w, grad.sum(axis=(0, 2, 3))
        return grad_x, grad_w


def _fold_windows(grad_win: np.ndarray, x_shape: tuple[int, ...], stride: int) -> np.ndarray:
    """Scatter-add window gradients (N, C, Ho, Wo, k, k) back onto the input."""
    out_h, out_w, k = grad_win.shape[2], grad_win.shape[3], grad_win.shape[4]
    grad_x = np.zeros(x_shape, dtype=grad_win.dtype)
    for i in range(k):
        for j in range(k):
            grad_x[:, :, i:i + stride * (out_h - 1) + 1:stride, j:j + stride * (out_w - 1) + 1:stride] += (
                grad_win[..., i, j]
            )
    return grad_x


class DynamicFilter(Function):
    """
    Per-sample, per-row-group filtering of a pre-padded map.

    ``kernels`` is (N, r, k, k) or (r, k, k) when shared by the batch; the
    C channels are split into r consecutive groups of C/r channels.
    """

    def forward(self, x, kernels):
        n, channels, height, width = x.shape
        rows, k = kernels.shape[-3], kernels.shape[-1]
        group = channels // rows
        out_h, out_w = height - k + 1, width - k + 1
        self.x_shape = x.shape
        self.kernels = kernels
        self.windows = sliding_window_view(x, (k, k), axis=(2, 3)).reshape(
            n, rows, group, out_h, out_w, k, k
        )
        spec = "nrmhwij,nrij->nrmhw" if kernels.ndim == 4 else "nrmhwij,rij->nrmhw"
        out = np.einsum(spec, self.windows, kernels, optimize=True)
        return out.reshape(n, channels, out_h, out_w)

    def backward(self, grad):
        n, channels, _, _ = self.x_shape
        rows, group, out_h, out_w, k = self.windows.shape[1:6]
        g = grad.reshape(n, rows, group, out_h, out_w)
        if self.kernels.ndim == 4:
            grad_k = np.einsum("nrmhw,nrmhwij->nrij", g, self.windows, optimize=True)
            grad_win = np.einsum("nrmhw,nrij->nrmhwij", g, self.kernels, optimize=True)
        else:
            grad_k = np.einsum("nrmhw,nrmhwij->rij", g, self.windows, optimize=True)
            grad_win = np.einsum("nrmhw,rij->nrmhwij", g, self.kernels, optimize=True)
        grad_win = grad_win.reshape(n, channels, out_h, out_w, k, k)
        return _fold_windows(grad_win, self.x_shape, 1), grad_k


def pad2d(x: Tensor, pad: int, mode: str = "zero") -> Tensor:
    if mode not in PADDING_MODES:
        raise ConfigError(f"unknown padding mode {mode!r}; expected one of {PADDING_MODES}")
    if pad == 0:
        return x
    if mode == "reflect" and (x.shape[-2] <= pad or x.shape[-1] <= pad):
        raise DimensionError(f"reflect padding {pad} needs spatial size > {pad}, got {x.shape[-2:]}")
    return Pad2d.apply(x, pad=pad, mode=mode)


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding_mode: str = "zero",
    groups: int = 1,
    padding: Optional[int] = None,
) -> Tensor:
    """
    2-D grouped cross-correlation with "same" padding (k-1)/2 by default.

    Args:
        x: Input N x C_in x H x W.
        kernel: C_out x (C_in/groups) x k x k.
        bias: Optional C_out vector.
        stride: Step between output positions (>= 1).
        padding_mode: "zero" or "reflect".
        groups: Channel groups; groups == C_in gives a depthwise convolution.
        padding: Explicit padding overriding the "same" default.

    Raises:
        DimensionError: Incompatible shapes.
        ConfigError: ``groups`` does not divide the channel counts, bad stride.
    """
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d needs 4-D input and kernel, got {x.shape} and {kernel.shape}")
    if kernel.shape[2] != kernel.shape[3]:
        raise DimensionError(f"conv2d kernel must be square, got {kernel.shape[2:]}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    in_channels = x.shape[1]
    if groups < 1 or in_channels % groups or kernel.shape[0] % groups:
        raise ConfigError(
            f"groups={groups} must divide input channels {in_channels} and output channels {kernel.shape[0]}"
        )
    if kernel.shape[1] * groups != in_channels:
        raise DimensionError(
            f"kernel expects {kernel.shape[1] * groups} input channels, input has {in_channels}"
        )
    if bias is not None and bias.shape != (kernel.shape[0],):
        raise DimensionError(f"bias shape {bias.shape} does not match {kernel.shape[0]} outputs")
    k = kernel.shape[-1]
    pad = (k - 1) // 2 if padding is None else padding
    padded = pad2d(x, pad, padding_mode)
    if padded.shape[2] < k or padded.shape[3] < k:
        raise DimensionError(f"input {x.shape[2:]} too small for kernel size {k}")
    inputs = (padded, kernel) if bias is None else (padded, kernel, bias)
    return Conv2dValid.apply(*inputs, stride=stride, groups=groups)


def dynamic_filter(x: Tensor, kernels: Tensor, padding_mode: str = "reflect") -> Tensor:
    """Filter each row group of ``x`` with its own k x k kernel ("same" size)."""
    if x.ndim != 4 or kernels.ndim not in (3, 4):
        raise DimensionError(f"dynamic_filter got input {x.shape} and kernels {kernels.shape}")
    rows = kernels.shape[-3]
    if x.shape[1] % rows:
        raise DimensionError(f"{rows} filter rows do not divide {x.shape[1]} channels")
    if kernels.ndim == 4 and kernels.shape[0] != x.shape[0]:
        raise DimensionError(f"kernel batch {kernels.shape[0]} != input batch {x.shape[0]}")
    k = kernels.shape[-1]
    padded = pad2d(x, (k - 1) // 2, padding_mode)
    return DynamicFilter.apply(padded, kernels)


# ----------------------------------------------------------------------
# Normalization, attention helpers, pooling
# ----------------------------------------------------------------------


class Softmax(Function):
    def forward(self, a, axis=-1):
        self.axis = axis
        shifted = a - a.max(axis=axis, keepdims=True)
        exp = np.exp(shifted)
        self.out = exp / exp.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        y = self.out
        return (y * (grad - (grad * y).sum(axis=self.axis, keepdims=True)),)


class LayerNorm2d(Function):
    """Normalize over channels at each spatial position, then affine."""

    def forward(self, x, weight, bias, eps=1e-6):
        mu = x.mean(axis=1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.y = (x - mu) * self.inv_std
        self.weight = weight.reshape(1, -1, 1, 1)
        return self.weight * self.y + bias.reshape(1, -1, 1, 1)

    def backward(self, grad):
        g = grad * self.weight
        mean_g = g.mean(axis=1, keepdims=True)
        mean_gy = (g * self.y).mean(axis=1, keepdims=True)
        grad_x = self.inv_std * (g - self.y * mean_gy - mean_g)
        return grad_x, (grad * self.y).sum(axis=(0, 2, 3)), grad.sum(axis=(0, 2, 3))


class PoolStd(Function):
    """Population standard deviation over the spatial axes."""

    def forward(self, x):
        count = x.shape[2] * x.shape[3]
        self.count = count
        self.centered = x - x.mean(axis=(2, 3), keepdims=True)
        self.std = np.sqrt((self.centered ** 2).mean(axis=(2, 3), keepdims=True))
        return self.std

    def backward(self, grad):
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(self.std > 0, grad / (self.count * self.std), 0.0)
        return ((scale * self.centered).astype(self.centered.dtype, copy=False),)


class Upsample2(Function):
    """Nearest-neighbour x2 upsampling of the last two axes."""

    def forward(self, a):
        return a.repeat(2, axis=-2).repeat(2, axis=-1)

    def backward(self, grad):
        *lead, height, width = grad.shape
        return (grad.reshape(*lead, height // 2, 2, width // 2, 2).sum(axis=(-3, -1)),)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted softmax; outputs are nonnegative and sum to 1 along ``axis``."""
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {x.shape}")
    return Softmax.apply(x, axis=axis)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Channel-wise layer normalization of an N x C x H x W map."""
    if eps <= 0:
        raise ContractError(f"layer_norm eps must be > 0, got {eps}")
    if x.ndim != 4 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise DimensionError(f"layer_norm shapes: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    return LayerNorm2d.apply(x, gamma, beta, eps=eps)


def pool_stats(x: Tensor, kind: str = "gap") -> Tensor:
    """
    Global per-channel statistic, N x C x 1 x 1.

    ``gap`` is the spatial mean; ``gsp`` the population standard deviation.
    """
    if x.ndim != 4 or x.shape[2] * x.shape[3] < 1:
        raise DimensionError(f"pool_stats needs a non-empty N x C x H x W map, got {x.shape}")
    if kind == "gap":
        return mean(x, axis=(2, 3), keepdims=True)
    if kind == "gsp":
        return PoolStd.apply(x)
    raise ConfigError(f"unknown pooling kind {kind!r}; expected 'gap' or 'gsp'")


def resample(x: Tensor, direction: str) -> Tensor:
    """Fixed 2x resampler: ``down2`` is 2x2 average pooling, ``up2`` nearest duplication."""
    if direction == "down2":
        n, c, height, width = x.shape
        if height % 2 or width % 2:
            raise DimensionError(f"down2 needs even spatial size, got {height}x{width}")
        return mean(x.reshape(n, c, height // 2, 2, width // 2, 2), axis=(3, 5))
    if direction == "up2":
        return Upsample2.apply(x)
    raise ConfigError(f"unknown resample direction {direction!r}")


def _adaptive_pool_matrix(size_in: int, size_out: int, dtype) -> np.ndarray:
    matrix = np.zeros((size_out, size_in), dtype=dtype)
    for i in range(size_out):
        start = (i * size_in) // size_out
        stop = -((-(i + 1) * size_in) // size_out)
        matrix[i, start:stop] = 1.0 / (stop - start)
    return matrix


def adaptive_avg_pool2d(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Average-pool the last two axes into ``out_h x out_w`` bins."""
    height, width = x.shape[-2:]
    if height < out_h or width < out_w:
        raise DimensionError(f"cannot pool {height}x{width} down to {out_h}x{out_w}")
    rows = Tensor(_adaptive_pool_matrix(height, out_h, x.dtype))
    cols = Tensor(_adaptive_pool_matrix(width, out_w, x.dtype).T.copy())
    return matmul(matmul(rows, x), cols)


# ----------------------------------------------------------------------
# Fourier transform
# ----------------------------------------------------------------------


def _bit_reverse_permutation(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    index = np.arange(n)
    reversed_index = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        reversed_index |= ((index >> b) & 1) << (bits - 1 - b)
    return reversed_index


def dft_matrix(n: int) -> np.ndarray:
    """Unnormalized DFT matrix exp(-2 pi i jk / n)."""
    index = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(index, index) / n)


def _fft_last_axis(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    if n & (n - 1):
        return a @ dft_matrix(n).T
    lead = a.shape[:-1]
    out = a[..., _bit_reverse_permutation(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return out


def fft2(x: np.ndarray) -> np.ndarray:
    """
    Unnormalized 2-D DFT over the last two axes.

    Radix-2 Cooley-Tukey when a side is a power of two, naive DFT otherwise.
    """
    a = np.asarray(x, dtype=np.complex128)
    a = _fft_last_axis(a)
    a = np.swapaxes(_fft_last_axis(np.swapaxes(a, -1, -2)), -1, -2)
    return a


class Spectrum2d(Function):
    """Real and imaginary DFT parts stacked on a new leading axis."""

    def forward(self, a):
        spectrum = fft2(a)
        return np.stack([spectrum.real, spectrum.imag]).astype(a.dtype)

    def backward(self, grad):
        z = grad[0] + 1j * grad[1]
        return (fft2(np.conj(z)).real.astype(grad.dtype),)


def spectrum2d(x: Tensor) -> Tensor:
    return Spectrum2d.apply(x)

# -*- coding: utf-8 -*-

import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from jcrnet.exceptions import ConfigurationError
from jcrnet.exceptions import DimensionError
from jcrnet.tensor import Function
from jcrnet.tensor import reshape
from jcrnet.tensor import Tensor

logger = logging.getLogger(__name__)

LAPLACIAN_KERNEL = ((0.0, 1.0, 0.0), (1.0, -4.0, 1.0), (0.0, 1.0, 0.0))

_PAD_MODES = {"zero": "constant", "reflect": "reflect"}


def _windows(padded, kh, kw, stride):
    # (N, C, H', W', kh, kw) view over the padded input
    return sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


class Conv2d(Function):
    def forward(self, x, weight, bias, stride, padding):
        self.x_shape = x.shape
        self.stride, self.padding = stride, padding
        padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        self.padded_shape = padded.shape
        self.weight = weight
        self.cols = _windows(padded, weight.shape[2], weight.shape[3], stride)
        out = np.tensordot(self.cols, weight, axes=([1, 4, 5], [1, 2, 3]))
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2)) + bias.reshape(1, -1, 1, 1)

    def backward(self, grad):
        kh, kw = self.weight.shape[2:]
        out_h, out_w = grad.shape[2:]
        s, p = self.stride, self.padding

        grad_weight = np.tensordot(grad, self.cols, axes=([0, 2, 3], [0, 2, 3]))
        grad_bias = grad.sum(axis=(0, 2, 3))

        grad_cols = np.tensordot(grad, self.weight, axes=([1], [0]))
        grad_padded = np.zeros(self.padded_shape, dtype=grad_cols.dtype)
        for i in range(kh):
            for j in range(kw):
                grad_padded[
                    :, :, i : i + s * out_h : s, j : j + s * out_w : s
                ] += grad_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)

        height, width = self.x_shape[2:]
        grad_x = grad_padded[:, :, p : p + height, p : p + width]
        return grad_x, grad_weight, grad_bias


def conv2d(x, weight, bias, stride=1, padding=0):
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(
            f"conv2d needs 4-d input and weight, got {x.shape} and {weight.shape}"
        )

    cout, cin, kh, kw = weight.shape
    if x.shape[1] != cin:
        raise DimensionError(f"conv2d input has {x.shape[1]} channels, weight expects {cin}")

    if bias.shape != (cout,):
        raise DimensionError(f"conv2d bias shape {bias.shape} does not match {cout} outputs")

    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigurationError(f"conv2d kernel extents must be odd, got {kh}x{kw}")

    if stride < 1 or padding < 0:
        raise ConfigurationError(f"Invalid stride {stride} / padding {padding}")

    height, width = x.shape[2] + 2 * padding, x.shape[3] + 2 * padding
    if height < kh or width < kw:
        raise ConfigurationError(
            f"Kernel {kh}x{kw} does not fit padded input {height}x{width}"
        )

    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding)


class Pad2d(Function):
    def forward(self, x, padding, mode):
        self.shape = x.shape
        self.padding, self.mode = padding, mode
        widths = ((0, 0), (0, 0), (padding, padding), (padding, padding))
        return np.pad(x, widths, mode=_PAD_MODES[mode])

    def backward(self, grad):
        p = self.padding
        height, width = self.shape[2:]
        if self.mode == "zero":
            return (grad[:, :, p : p + height, p : p + width],)

        # fold reflected borders back onto their source rows and columns
        rows = np.pad(np.arange(height), p, mode="reflect")
        cols = np.pad(np.arange(width), p, mode="reflect")
        folded = np.zeros(self.shape[:3] + (grad.shape[3],), dtype=grad.dtype)
        np.add.at(folded, (slice(None), slice(None), rows), grad)
        out = np.zeros(self.shape, dtype=grad.dtype)
        np.add.at(out, (slice(None), slice(None), slice(None), cols), folded)
        return (out,)


def pad2d(x, padding, mode="zero"):
    if mode not in _PAD_MODES:
        raise ConfigurationError(f"Unknown padding mode: {mode}")

    if mode == "reflect" and min(x.shape[2:]) <= padding:
        raise DimensionError(
            f"Reflect padding {padding} needs extents above it, got {x.shape}"
        )

    if padding == 0:
        return x

    return Pad2d.apply(x, padding=padding, mode=mode)


class UpsampleNearest2(Function):
    def forward(self, x):
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, grad):
        n, c, h2, w2 = grad.shape
        return (grad.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5)),)


def upsample_nearest2(x):
    if x.ndim != 4:
        raise DimensionError(f"upsample needs (N,C,H,W), got {x.shape}")
    return UpsampleNearest2.apply(x)


def _down_stride2(x, weight, bias):
    if weight is None:
        raise ConfigurationError("down_stride2 needs the caller's convolution weights")

    if x.shape[2] % 2 or x.shape[3] % 2:
        raise DimensionError(f"down_stride2 needs even extents, got {x.shape}")

    return conv2d(x, weight, bias, stride=2, padding=weight.shape[2] // 2)


def _up_nearest2(x, weight, bias):
    up = upsample_nearest2(x)
    if weight is None:
        return up

    return conv2d(up, weight, bias, stride=1, padding=weight.shape[2] // 2)


_RESAMPLERS = {"down_stride2": _down_stride2, "up_nearest2": _up_nearest2}


def resample(x, mode, weight=None, bias=None):
    """Halve or double the spatial extents. Without ``weight`` the upward
    path stops after the nearest-neighbour duplication."""
    try:
        resampler = _RESAMPLERS[mode]
    except KeyError:
        raise ConfigurationError(f"Unknown resample mode: {mode}")

    return resampler(x, weight, bias)


def laplacian_filter(x):
    n, c, height, width = x.shape
    if height < 3 or width < 3:
        raise DimensionError(f"Laplacian needs extents of at least 3, got {x.shape}")

    dtype = x.data.dtype
    kernel = Tensor(np.asarray(LAPLACIAN_KERNEL, dtype=dtype).reshape(1, 1, 3, 3))
    bias = Tensor(np.zeros(1, dtype=dtype))

    planes = reshape(x, (n * c, 1, height, width))
    filtered = conv2d(pad2d(planes, 1, mode="reflect"), kernel, bias)
    return reshape(filtered, (n, c, height, width))

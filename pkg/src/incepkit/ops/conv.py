"""2-D convolution (cross-correlation) in NHWC with an im2col/matmul path.

Grid rules:

* ``same``:  ``out = ceil(size / stride)``; the total pad
  ``max((out - 1) * stride + kernel - size, 0)`` is split ``floor(P/2)`` before,
  the remainder after.
* ``valid``: ``out = floor((size - kernel) / stride) + 1``, requires ``size >= kernel``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError

PADDINGS = ("same", "valid")
ACTIVATIONS = ("relu", "none")


def output_size(size: int, kernel: int, stride: int, padding: str) -> int:
    if size < 1 or kernel < 1 or stride < 1:
        raise ShapeError(f"non-positive grid arguments: size={size}, kernel={kernel}, stride={stride}")
    if padding == "same":
        return -(-size // stride)
    if padding == "valid":
        if size < kernel:
            raise ShapeError(f"valid padding needs grid >= kernel, got {size} < {kernel}")
        return (size - kernel) // stride + 1
    raise ShapeError(f"unknown padding {padding!r}")


def pad_amounts(size: int, kernel: int, stride: int, padding: str) -> tuple[int, int]:
    """(before, after) padding along one axis."""
    if padding == "valid":
        return 0, 0
    out = output_size(size, kernel, stride, padding)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


@dataclass(frozen=True)
class ConvSpec:
    kernel_h: int
    kernel_w: int
    stride_h: int = 1
    stride_w: int = 1
    padding: str = "same"
    out_channels: int = 1
    activation: str = "none"

    def __post_init__(self):
        for name in ("kernel_h", "kernel_w", "stride_h", "stride_w", "out_channels"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ShapeError(f"ConvSpec.{name} must be a positive integer, got {value!r}")
        if self.padding not in PADDINGS:
            raise ShapeError(f"ConvSpec.padding must be one of {PADDINGS}, got {self.padding!r}")
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"ConvSpec.activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @classmethod
    def from_params(cls, params: dict) -> "ConvSpec":
        kh, kw = params["kernel"]
        sh, sw = params.get("stride", (1, 1))
        return cls(int(kh), int(kw), int(sh), int(sw), params.get("padding", "same"),
                   int(params["out_channels"]), params.get("activation", "none"))

    def to_params(self) -> dict:
        return {
            "kernel": [self.kernel_h, self.kernel_w],
            "stride": [self.stride_h, self.stride_w],
            "padding": self.padding,
            "out_channels": self.out_channels,
            "activation": self.activation,
        }

    def output_grid(self, h: int, w: int) -> tuple[int, int]:
        return (output_size(h, self.kernel_h, self.stride_h, self.padding),
                output_size(w, self.kernel_w, self.stride_w, self.padding))


def pad_nhwc(x, kernel, stride, padding, value=0.0):
    """Pad H and W of an NHWC array; returns (padded, (top, left), (ho, wo))."""
    _, h, w, _ = x.shape
    kh, kw = kernel
    sh, sw = stride
    ho = output_size(h, kh, sh, padding)
    wo = output_size(w, kw, sw, padding)
    top, bottom = pad_amounts(h, kh, sh, padding)
    left, right = pad_amounts(w, kw, sw, padding)
    if top or bottom or left or right:
        x = np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0)), constant_values=value)
    return x, (top, left), (ho, wo)


def windows(xp, kernel, stride, out_grid):
    """Strided view of shape (N, Ho, Wo, C, Kh, Kw) over a padded input."""
    kh, kw = kernel
    sh, sw = stride
    ho, wo = out_grid
    view = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    return view[:, : (ho - 1) * sh + 1 : sh, : (wo - 1) * sw + 1 : sw]


def scatter_windows(dwin, padded_shape, kernel, stride, dtype):
    """Adjoint of :func:`windows`: dwin has shape (N, Ho, Wo, Kh, Kw, C)."""
    kh, kw = kernel
    sh, sw = stride
    _, ho, wo = dwin.shape[:3]
    out = np.zeros(padded_shape, dtype=dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, i : i + (ho - 1) * sh + 1 : sh, j : j + (wo - 1) * sw + 1 : sw, :] += dwin[:, :, :, i, j, :]
    return out


def _check_conv_args(x, w, spec):
    if x.ndim != 4:
        raise ShapeError(f"conv input must be NHWC, got shape {x.shape}")
    if w.shape[:2] != (spec.kernel_h, spec.kernel_w) or w.shape[3] != spec.out_channels:
        raise ShapeError(f"weights {w.shape} do not match spec {spec}")
    if x.shape[3] != w.shape[2]:
        raise ShapeError(f"channel mismatch: input has {x.shape[3]}, weights expect {w.shape[2]}")


def _im2col(x, spec):
    if spec.kernel_h == spec.kernel_w == spec.stride_h == spec.stride_w == 1:
        n, h, w, c = x.shape
        return x.reshape(n * h * w, c), (h, w), x.shape
    kernel = (spec.kernel_h, spec.kernel_w)
    stride = (spec.stride_h, spec.stride_w)
    xp, _, grid = pad_nhwc(x, kernel, stride, spec.padding)
    win = windows(xp, kernel, stride, grid)
    n, ho, wo, c = win.shape[:4]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, spec.kernel_h * spec.kernel_w * c)
    return cols, grid, xp.shape


def conv2d_forward(x, weights, bias, spec: ConvSpec):
    """Cross-correlation + bias, followed by ReLU when ``spec.activation == 'relu'``."""
    _check_conv_args(x, weights, spec)
    cols, (ho, wo), _ = _im2col(x, spec)
    y = cols @ weights.reshape(-1, spec.out_channels)
    y += bias
    y = y.reshape(x.shape[0], ho, wo, spec.out_channels)
    if spec.activation == "relu":
        np.maximum(y, 0, out=y)
    return y


def conv2d_backward(grad_out, saved_input, weights, spec: ConvSpec, output=None):
    """Gradients (input, weights, bias) of :func:`conv2d_forward`.

    ``output`` is the forward result; it is only consulted for the ReLU mask
    and recomputed when omitted.
    """
    x = saved_input
    _check_conv_args(x, weights, spec)
    n = x.shape[0]
    ho, wo = spec.output_grid(x.shape[1], x.shape[2])
    if grad_out.shape != (n, ho, wo, spec.out_channels):
        raise ShapeError(f"grad_out {grad_out.shape} does not match forward output {(n, ho, wo, spec.out_channels)}")
    if spec.activation == "relu":
        if output is None:
            output = conv2d_forward(x, weights, np.zeros(spec.out_channels, dtype=x.dtype), spec)
        grad_out = grad_out * (output > 0)
    cols, _, padded_shape = _im2col(x, spec)
    g2 = grad_out.reshape(-1, spec.out_channels)
    grad_bias = g2.sum(axis=0)
    w2 = weights.reshape(-1, spec.out_channels)
    grad_weights = (cols.T @ g2).reshape(weights.shape)
    dcols = g2 @ w2.T
    if spec.kernel_h == spec.kernel_w == spec.stride_h == spec.stride_w == 1:
        return dcols.reshape(x.shape), grad_weights, grad_bias
    dwin = dcols.reshape(n, ho, wo, spec.kernel_h, spec.kernel_w, x.shape[3])
    gxp = scatter_windows(dwin, padded_shape, (spec.kernel_h, spec.kernel_w),
                          (spec.stride_h, spec.stride_w), x.dtype)
    top, _ = pad_amounts(x.shape[1], spec.kernel_h, spec.stride_h, spec.padding)
    left, _ = pad_amounts(x.shape[2], spec.kernel_w, spec.stride_w, spec.padding)
    grad_input = gxp[:, top : top + x.shape[1], left : left + x.shape[2], :]
    return np.ascontiguousarray(grad_input), grad_weights, grad_bias


def conv2d_direct(x, weights, bias, spec: ConvSpec):
    """Scalar-loop reference convolution. Slow; used as a test oracle."""
    _check_conv_args(x, weights, spec)
    n, h, w, cin = x.shape
    ho, wo = spec.output_grid(h, w)
    top, _ = pad_amounts(h, spec.kernel_h, spec.stride_h, spec.padding)
    left, _ = pad_amounts(w, spec.kernel_w, spec.stride_w, spec.padding)
    out = np.zeros((n, ho, wo, spec.out_channels), dtype=x.dtype)
    for b in range(n):
        for oy in range(ho):
            for ox in range(wo):
                for co in range(spec.out_channels):
                    acc = float(bias[co])
                    for ky in range(spec.kernel_h):
                        iy = oy * spec.stride_h + ky - top
                        if iy < 0 or iy >= h:
                            continue
                        for kx in range(spec.kernel_w):
                            ix = ox * spec.stride_w + kx - left
                            if ix < 0 or ix >= w:
                                continue
                            for ci in range(cin):
                                acc += float(x[b, iy, ix, ci]) * float(weights[ky, kx, ci, co])
                    if spec.activation == "relu" and acc < 0:
                        acc = 0.0
                    out[b, oy, ox, co] = acc
    return out

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .conv import output_size, pad_nhwc, scatter_windows, windows

POOL_MODES = ("max", "avg")


def _normalize(kernel, stride):
    kernel = (kernel, kernel) if np.isscalar(kernel) else tuple(kernel)
    stride = (stride, stride) if np.isscalar(stride) else tuple(stride)
    return kernel, stride


def _avg_counts(x, kernel, stride, padding):
    """Number of non-padded cells under each window, shape (1, Ho, Wo, 1)."""
    ones = np.ones((1, x.shape[1], x.shape[2], 1), dtype=x.dtype)
    op, _, grid = pad_nhwc(ones, kernel, stride, padding)
    return windows(op, kernel, stride, grid).sum(axis=(-2, -1))


def pool2d(x, mode, kernel, stride, padding):
    """Max or average pooling over H, W of an NHWC array.

    Average pooling with ``same`` padding divides by the count of real
    (non-padded) cells in each window.
    """
    if x.ndim != 4:
        raise ShapeError(f"pool input must be NHWC, got shape {x.shape}")
    if mode not in POOL_MODES:
        raise ShapeError(f"unknown pool mode {mode!r}")
    kernel, stride = _normalize(kernel, stride)
    if mode == "max":
        xp, _, grid = pad_nhwc(x, kernel, stride, padding, value=-np.inf)
        return windows(xp, kernel, stride, grid).max(axis=(-2, -1))
    xp, _, grid = pad_nhwc(x, kernel, stride, padding)
    total = windows(xp, kernel, stride, grid).sum(axis=(-2, -1))
    return total / _avg_counts(x, kernel, stride, padding)


def pool2d_backward(grad_out, x, mode, kernel, stride, padding):
    """Gradient w.r.t. the pooling input. Max routes to the first maximal tap."""
    kernel, stride = _normalize(kernel, stride)
    n, h, w, c = x.shape
    ho = output_size(h, kernel[0], stride[0], padding)
    wo = output_size(w, kernel[1], stride[1], padding)
    if grad_out.shape != (n, ho, wo, c):
        raise ShapeError(f"grad_out {grad_out.shape} does not match pool output {(n, ho, wo, c)}")
    kh, kw = kernel
    if mode == "max":
        xp, (top, left), grid = pad_nhwc(x, kernel, stride, padding, value=-np.inf)
        win = windows(xp, kernel, stride, grid).reshape(n, ho, wo, c, kh * kw)
        first = win.argmax(axis=-1)
        onehot = np.arange(kh * kw) == first[..., None]
        dwin = (onehot * grad_out[..., None]).reshape(n, ho, wo, c, kh, kw)
    elif mode == "avg":
        xp, (top, left), grid = pad_nhwc(x, kernel, stride, padding)
        share = grad_out / _avg_counts(x, kernel, stride, padding)
        dwin = np.broadcast_to(share[..., None, None], (n, ho, wo, c, kh, kw))
    else:
        raise ShapeError(f"unknown pool mode {mode!r}")
    dwin = dwin.transpose(0, 1, 2, 4, 5, 3)
    gxp = scatter_windows(dwin, xp.shape, kernel, stride, x.dtype)
    return np.ascontiguousarray(gxp[:, top : top + h, left : left + w, :])


def pool2d_direct(x, mode, kernel, stride, padding):
    """Loop reference for :func:`pool2d` (test oracle)."""
    from .conv import pad_amounts

    kernel, stride = _normalize(kernel, stride)
    n, h, w, c = x.shape
    ho = output_size(h, kernel[0], stride[0], padding)
    wo = output_size(w, kernel[1], stride[1], padding)
    top, _ = pad_amounts(h, kernel[0], stride[0], padding)
    left, _ = pad_amounts(w, kernel[1], stride[1], padding)
    out = np.zeros((n, ho, wo, c), dtype=x.dtype)
    for b in range(n):
        for oy in range(ho):
            for ox in range(wo):
                for ch in range(c):
                    vals = []
                    for ky in range(kernel[0]):
                        for kx in range(kernel[1]):
                            iy, ix = oy * stride[0] + ky - top, ox * stride[1] + kx - left
                            if 0 <= iy < h and 0 <= ix < w:
                                vals.append(float(x[b, iy, ix, ch]))
                    out[b, oy, ox, ch] = max(vals) if mode == "max" else sum(vals) / len(vals)
    return out

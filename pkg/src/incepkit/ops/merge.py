from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def add_scaled(shortcut, residual, alpha):
    """``shortcut + alpha * residual``; alpha=1 is the plain residual sum."""
    if shortcut.shape != residual.shape:
        raise ShapeError(
            f"residual sum needs identical shapes, got shortcut {shortcut.shape} vs residual {residual.shape}"
        )
    return shortcut + alpha * residual


def add_scaled_backward(grad_out, alpha):
    return grad_out, grad_out * alpha


def concat_channels(inputs):
    if not inputs:
        raise ShapeError("concat needs at least one input")
    lead = inputs[0].shape[:-1]
    for t in inputs[1:]:
        if t.shape[:-1] != lead:
            raise ShapeError(f"concat grid mismatch: {inputs[0].shape} vs {t.shape}")
    if len(inputs) == 1:
        return inputs[0]
    return np.concatenate(inputs, axis=-1)


def split_channels(grad_out, sizes):
    """Adjoint of :func:`concat_channels` given the per-input channel counts."""
    if sum(sizes) != grad_out.shape[-1]:
        raise ShapeError(f"split sizes {sizes} do not sum to {grad_out.shape[-1]}")
    bounds = np.cumsum(sizes)[:-1]
    return [np.ascontiguousarray(part) for part in np.split(grad_out, bounds, axis=-1)]

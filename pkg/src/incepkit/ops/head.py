"""Activation and classifier-head kernels."""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    return grad_out * (x > 0)


def global_avgpool(x):
    if x.ndim != 4:
        raise ShapeError(f"global_avgpool expects NHWC, got {x.shape}")
    return x.mean(axis=(1, 2))


def global_avgpool_backward(grad_out, input_shape):
    n, h, w, c = input_shape
    return np.broadcast_to((grad_out / (h * w))[:, None, None, :], input_shape).copy()


def dropout_mask(shape, keep_prob, rng_seed, dtype=np.float64):
    """Inverted-dropout multiplier: 0 with prob 1-keep, 1/keep otherwise."""
    rng = np.random.default_rng(rng_seed)
    keep = rng.random(shape) < keep_prob
    return (keep / keep_prob).astype(dtype)


def dropout(x, keep_prob, mode="train", rng_seed=0):
    """Returns ``(y, mask)``; mask is None whenever the op is the identity."""
    if not 0 < keep_prob <= 1:
        raise ValueError(f"keep_prob must lie in (0, 1], got {keep_prob}")
    if mode == "infer" or keep_prob == 1:
        return x, None
    mask = dropout_mask(x.shape, keep_prob, rng_seed, x.dtype)
    return x * mask, mask


def fully_connected(x, weights, bias):
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeError(f"fully_connected shape mismatch: input {x.shape}, weights {weights.shape}")
    return x @ weights + bias


def fully_connected_backward(grad_out, x, weights):
    return grad_out @ weights.T, x.T @ grad_out, grad_out.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(grad_out, probs):
    return probs * (grad_out - (grad_out * probs).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. ``logits``."""
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch size {n}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"label index out of range [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - z[rows, labels]))
    grad = softmax(logits)
    grad[rows, labels] -= 1
    return loss, grad / n

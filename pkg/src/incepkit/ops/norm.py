from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ShapeError

BN_MODES = ("train", "infer")


@dataclass(frozen=True)
class BatchNormParams:
    """Per-channel affine parameters and running statistics.

    Running stats follow ``running = momentum * running + (1 - momentum) * batch``
    with the biased batch variance.
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-3
    momentum: float = 0.99

    def __post_init__(self):
        c = len(self.gamma)
        for name in ("beta", "running_mean", "running_var"):
            if len(getattr(self, name)) != c:
                raise ShapeError(f"BatchNormParams.{name} has length {len(getattr(self, name))}, expected {c}")
        if np.any(self.running_var < 0):
            raise ShapeError("running_var must be non-negative")
        if not self.epsilon > 0:
            raise ShapeError("epsilon must be positive")
        if not 0 < self.momentum < 1:
            raise ShapeError("momentum must lie in (0, 1)")

    @classmethod
    def identity(cls, channels, dtype=np.float64, **kwargs):
        return cls(np.ones(channels, dtype), np.zeros(channels, dtype),
                   np.zeros(channels, dtype), np.ones(channels, dtype), **kwargs)

    @property
    def channels(self) -> int:
        return len(self.gamma)


def _reduce_axes(x):
    return tuple(range(x.ndim - 1))


def _check(x, params):
    if x.shape[-1] != params.channels:
        raise ShapeError(f"batchnorm channel mismatch: input has {x.shape[-1]}, params have {params.channels}")


def batchnorm(x, params: BatchNormParams, mode="train"):
    """Normalize over every axis but the last.

    Returns ``(y, params')``; in train mode ``params'`` carries updated running
    statistics, in infer mode it is ``params`` unchanged.
    """
    _check(x, params)
    if mode == "train":
        axes = _reduce_axes(x)
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        xhat = (x - mean) / np.sqrt(var + params.epsilon)
        m = params.momentum
        updated = replace(
            params,
            running_mean=(m * params.running_mean + (1 - m) * mean).astype(params.running_mean.dtype),
            running_var=(m * params.running_var + (1 - m) * var).astype(params.running_var.dtype),
        )
    elif mode == "infer":
        xhat = (x - params.running_mean) / np.sqrt(params.running_var + params.epsilon)
        updated = params
    else:
        raise ShapeError(f"unknown batchnorm mode {mode!r}")
    return params.gamma * xhat + params.beta, updated


def batchnorm_backward(grad_out, x, params: BatchNormParams, mode="train"):
    """Gradients (input, gamma, beta) of :func:`batchnorm` with the stats it used."""
    _check(x, params)
    axes = _reduce_axes(x)
    if mode == "train":
        mean = x.mean(axis=axes)
        inv_std = 1.0 / np.sqrt(x.var(axis=axes) + params.epsilon)
    else:
        mean = params.running_mean
        inv_std = 1.0 / np.sqrt(params.running_var + params.epsilon)
    xhat = (x - mean) * inv_std
    grad_beta = grad_out.sum(axis=axes)
    grad_gamma = (grad_out * xhat).sum(axis=axes)
    if mode == "infer":
        return grad_out * (params.gamma * inv_std), grad_gamma, grad_beta
    count = x.size // x.shape[-1]
    grad_input = (params.gamma * inv_std / count) * (count * grad_out - grad_beta - xhat * grad_gamma)
    return grad_input, grad_gamma, grad_beta

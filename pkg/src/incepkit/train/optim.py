"""RMSProp, classical momentum and parameter EMA.

All updates act on one array at a time, so a whole-manifest step is just a
loop and does not depend on manifest order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .config import TrainConfig


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape {a.shape} vs {b.shape}")


def rmsprop_step(param, grad, ms, lr, decay=0.9, epsilon=1.0):
    """``ms <- decay*ms + (1-decay)*g^2``; ``param <- param - lr*g/(sqrt(ms)+epsilon)``.

    Epsilon sits outside the square root. Returns ``(param, ms)``.
    """
    _same_shape(param, grad, "rmsprop grad")
    _same_shape(param, ms, "rmsprop accumulator")
    ms = decay * ms + (1 - decay) * grad * grad
    return param - lr * grad / (np.sqrt(ms) + epsilon), ms


def momentum_step(param, grad, velocity, lr, momentum=0.9):
    """Classical (heavy-ball) momentum: ``v <- m*v + g``; ``param <- param - lr*v``."""
    _same_shape(param, grad, "momentum grad")
    _same_shape(param, velocity, "momentum velocity")
    velocity = momentum * velocity + grad
    return param - lr * velocity, velocity


def ema_update(params: dict, shadow: dict, ema_decay: float) -> dict:
    if set(params) != set(shadow):
        raise KeyError(f"EMA manifest mismatch: {sorted(set(params) ^ set(shadow))}")
    out = {}
    for name, value in params.items():
        _same_shape(value, shadow[name], f"EMA {name}")
        out[name] = ema_decay * shadow[name] + (1 - ema_decay) * value
    return out


@dataclass
class OptimizerState:
    slots: dict
    shadow: dict
    step: int = 0

    @classmethod
    def create(cls, params: dict) -> "OptimizerState":
        return cls({k: np.zeros_like(v) for k, v in params.items()}, {k: v.copy() for k, v in params.items()})


def apply_updates(params: dict, grads: dict, state: OptimizerState, lr: float, config: TrainConfig) -> dict:
    """One optimizer step over every trainable entry of ``params`` (returns new dict)."""
    out = {}
    for name, value in params.items():
        if config.optimizer == "rmsprop":
            out[name], state.slots[name] = rmsprop_step(
                value, grads[name], state.slots[name], lr, config.rms_decay, config.rms_epsilon
            )
        else:
            out[name], state.slots[name] = momentum_step(value, grads[name], state.slots[name], lr, config.momentum)
    state.step += 1
    return out

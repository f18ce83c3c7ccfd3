from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

from ..errors import ConfigError

OPTIMIZERS = ("rmsprop", "momentum")


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer, schedule and loop settings.

    ``residual_scale`` (when not None) overrides the alpha of every ResidualAdd
    in the trained graph. ``max_steps``, when set, fixes the run length in
    steps and takes precedence over ``epochs``.
    """

    optimizer: str = "rmsprop"
    rms_decay: float = 0.9
    rms_epsilon: float = 1.0
    momentum: float = 0.9
    base_lr: float = 0.045
    lr_decay_rate: float = 0.94
    lr_decay_epochs: int = 2
    batch_size: int = 32
    epochs: int = 1
    max_steps: int | None = None
    ema_decay: float = 0.9999
    seed: int = 0
    residual_scale: float | None = None
    dtype: str = "float32"
    topk: int = 5

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        for name in ("rms_epsilon", "lr_decay_rate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("rms_decay", "momentum", "ema_decay"):
            if not 0 <= getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.base_lr < 0:
            raise ConfigError("base_lr must be non-negative")
        for name in ("lr_decay_epochs", "batch_size", "epochs", "topk"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be positive")
        if self.residual_scale is not None and not 0 <= self.residual_scale <= 1:
            raise ConfigError("residual_scale must lie in [0, 1]")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**doc)


def lr_at(epoch: float, config: TrainConfig) -> float:
    """Staircase exponential decay: ``base_lr * rate ** floor(epoch / decay_epochs)``."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return config.base_lr * config.lr_decay_rate ** math.floor(epoch / config.lr_decay_epochs)


@dataclass(frozen=True)
class DataConfig:
    """Synthetic dataset settings; the class count comes from the architecture."""

    samples_per_class: int = 40
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.samples_per_class, int) or self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be a positive integer")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "DataConfig":
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown DataConfig fields: {sorted(unknown)}")
        return cls(**doc)

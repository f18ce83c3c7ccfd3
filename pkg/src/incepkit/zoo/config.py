from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache
from importlib import resources

from ..errors import ConfigError

VARIANTS = ("inception_v4", "inception_resnet_v1", "inception_resnet_v2")
ALIASES = {
    "v4": "inception_v4",
    "ir1": "inception_resnet_v1",
    "ir2": "inception_resnet_v2",
    "InceptionV4": "inception_v4",
    "InceptionResNetV1": "inception_resnet_v1",
    "InceptionResNetV2": "inception_resnet_v2",
}


def canonical_variant(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in VARIANTS:
        raise ConfigError(f"unknown architecture {name!r}; expected one of {VARIANTS} or {sorted(ALIASES)}")
    return name


@lru_cache(maxsize=None)
def _load_definition_text(name: str) -> str:
    return resources.files("incepkit.zoo").joinpath("defs", f"{name}.json").read_text()


def load_definition(name: str) -> dict:
    """Parsed definition file (fresh copy, safe to mutate)."""
    return json.loads(_load_definition_text(name))


@dataclass(frozen=True)
class ReductionAParams:
    k: int
    l: int  # noqa: E741
    m: int
    n: int

    def __post_init__(self):
        for name in ("k", "l", "m", "n"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ConfigError(f"ReductionAParams.{name} must be a positive integer, got {value!r}")

    @classmethod
    def for_variant(cls, variant: str) -> "ReductionAParams":
        row = load_definition(canonical_variant(variant))["reduction_a"]
        return cls(row["k"], row["l"], row["m"], row["n"])


@dataclass(frozen=True)
class ArchConfig:
    """Knobs of one architecture variant.

    ``block_counts`` and ``reduction_a`` default to the variant's definition file.
    ``residualize`` wraps the pure Inception-v4 blocks in residual connections
    (ignored by the residual variants, which are always residual).
    """

    variant: str = "inception_v4"
    num_classes: int = 1000
    width_multiplier: float = 1.0
    residual_scale: float = 0.1
    block_counts: tuple | None = None
    reduction_a: ReductionAParams | None = None
    dropout_keep: float = 0.8
    input_size: tuple = (299, 299)
    bn_epsilon: float = 1e-3
    bn_momentum: float = 0.99
    residualize: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", canonical_variant(self.variant))
        definition = load_definition(self.variant)
        if self.block_counts is None:
            object.__setattr__(self, "block_counts", tuple(definition["overall"]["block_counts"]))
        else:
            object.__setattr__(self, "block_counts", tuple(int(b) for b in self.block_counts))
        if self.reduction_a is None:
            object.__setattr__(self, "reduction_a", ReductionAParams.for_variant(self.variant))
        elif isinstance(self.reduction_a, dict):
            object.__setattr__(self, "reduction_a", ReductionAParams(**self.reduction_a))
        object.__setattr__(self, "input_size", tuple(int(s) for s in self.input_size))
        if not isinstance(self.num_classes, int) or self.num_classes < 1:
            raise ConfigError(f"num_classes must be a positive integer, got {self.num_classes!r}")
        if not 0 < self.width_multiplier <= 1:
            raise ConfigError(f"width_multiplier must lie in (0, 1], got {self.width_multiplier}")
        if not 0 <= self.residual_scale <= 1:
            raise ConfigError(f"residual_scale must lie in [0, 1], got {self.residual_scale}")
        if len(self.block_counts) != 3 or any(b < 0 for b in self.block_counts):
            raise ConfigError(f"block_counts must be three non-negative integers, got {self.block_counts}")
        if not 0 < self.dropout_keep <= 1:
            raise ConfigError(f"dropout_keep must lie in (0, 1], got {self.dropout_keep}")
        if len(self.input_size) != 2 or min(self.input_size) < 1:
            raise ConfigError(f"input_size must be (H, W), got {self.input_size}")
        if not 0 < self.bn_momentum < 1 or not self.bn_epsilon > 0:
            raise ConfigError("bn_momentum must lie in (0, 1) and bn_epsilon must be positive")

    @property
    def is_residual(self) -> bool:
        return self.variant != "inception_v4" or self.residualize

    def with_(self, **changes) -> "ArchConfig":
        return replace(self, **changes)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["block_counts"] = list(self.block_counts)
        doc["input_size"] = list(self.input_size)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ArchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown ArchConfig fields: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def desk_config(variant: str = "inception_resnet_v2", **overrides) -> ArchConfig:
    """Desk-scale preset: width 0.25, 75x75 input, 10 classes."""
    base = dict(variant=variant, num_classes=10, width_multiplier=0.25, input_size=(75, 75))
    base.update(overrides)
    return ArchConfig(**base)


__all__ = ["ArchConfig", "ReductionAParams", "VARIANTS", "canonical_variant", "desk_config", "load_definition"]

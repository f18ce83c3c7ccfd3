"""Checkpoints: one TBIN file per parameter plus a JSON manifest.

``manifest.json`` maps each name to ``{file, shape, role}``; the EMA copy sits
beside it as ``manifest_ema.json`` with its own tensor files.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ShapeError
from ..tensor import read_tbin, write_tbin

MANIFEST = "manifest.json"
EMA_MANIFEST = "manifest_ema.json"


def _file_name(name: str, suffix: str) -> str:
    return name.replace("/", "__") + suffix + ".tbin"


def save_weights(directory, weights: dict, roles: dict | None = None, ema=False) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    suffix = ".ema" if ema else ""
    manifest = {}
    for name in sorted(weights):
        value = np.asarray(weights[name])
        fname = _file_name(name, suffix)
        write_tbin(directory / fname, value)
        manifest[name] = {"file": fname, "shape": list(value.shape),
                          "role": (roles or {}).get(name, "trainable")}
    path = directory / (EMA_MANIFEST if ema else MANIFEST)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def save_checkpoint(directory, weights: dict, ema_weights: dict, roles: dict) -> Path:
    save_weights(directory, weights, roles)
    save_weights(directory, ema_weights, roles, ema=True)
    return Path(directory) / MANIFEST


def load_weights(manifest_path) -> dict:
    """Load every tensor listed in a manifest; shapes are checked against it."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    out = {}
    for name, entry in manifest.items():
        value = read_tbin(manifest_path.parent / entry["file"])
        if list(value.shape) != list(entry["shape"]):
            raise ShapeError(f"{name}: file holds {value.shape}, manifest says {tuple(entry['shape'])}")
        out[name] = value
    return out


def ema_manifest_for(manifest_path) -> Path:
    return Path(manifest_path).parent / EMA_MANIFEST

"""Procedural image-classification task used in place of ImageNet.

Class ``c`` of ``K`` is a sinusoidal grating with orientation ``pi * c / K``
and one of three spatial frequencies (``c % 3``). Every sample draws a random
phase, a small orientation jitter, a random positive colour tint and additive
Gaussian noise. The random phase makes the class mean image nearly flat, so a
linear model on raw pixels generalises poorly, while orientation and
frequency are easy for a convnet.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FREQUENCIES = (3.0, 5.0, 7.5)  # cycles per image side
NOISE = 0.35
JITTER = np.deg2rad(3.0)


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, H, W, 3)
    labels: np.ndarray  # (N,) int64
    num_classes: int

    def __len__(self):
        return len(self.labels)

    def batches(self, batch_size, epoch, seed, drop_last=True):
        """Shuffled batches for one epoch; the permutation depends only on (seed, epoch)."""
        order = np.random.default_rng([int(seed), int(epoch), 7]).permutation(len(self))
        stop = len(order) - len(order) % batch_size if drop_last else len(order)
        for start in range(0, stop, batch_size):
            idx = order[start : start + batch_size]
            yield self.images[idx], self.labels[idx]

    def astype(self, dtype):
        return Dataset(self.images.astype(dtype), self.labels, self.num_classes)


def synthetic_dataset(num_classes, samples_per_class, image_size, seed=0, dtype=np.float32) -> Dataset:
    if num_classes < 1 or samples_per_class < 1:
        raise ValueError("num_classes and samples_per_class must be positive")
    h, w = (image_size, image_size) if np.isscalar(image_size) else image_size
    rng = np.random.default_rng([int(seed), 1234])
    yy, xx = np.meshgrid(np.linspace(-0.5, 0.5, h), np.linspace(-0.5, 0.5, w), indexing="ij")
    n = num_classes * samples_per_class
    images = np.empty((n, h, w, 3), dtype=np.float64)
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    for i, c in enumerate(labels):
        theta = np.pi * c / num_classes + rng.uniform(-JITTER, JITTER)
        freq = FREQUENCIES[c % len(FREQUENCIES)]
        phase = rng.uniform(0, 2 * np.pi)
        proj = xx * np.cos(theta) + yy * np.sin(theta)
        grating = np.sin(2 * np.pi * freq * proj + phase)
        tint = rng.uniform(0.5, 1.0, size=3)
        images[i] = grating[..., None] * tint + NOISE * rng.standard_normal((h, w, 3))
    images = (images - images.mean()) / images.std()
    return Dataset(images.astype(dtype), labels.astype(np.int64), num_classes)


def linear_baseline_accuracy(train: Dataset, test: Dataset, l2=1e-2) -> float:
    """Held-out accuracy of a ridge-regression one-vs-all classifier on raw pixels."""
    xtr = train.images.reshape(len(train), -1).astype(np.float64)
    xte = test.images.reshape(len(test), -1).astype(np.float64)
    onehot = np.eye(train.num_classes)[train.labels]
    # dual form: the feature count far exceeds the sample count
    gram = xtr @ xtr.T + l2 * np.eye(len(xtr))
    coef = xtr.T @ np.linalg.solve(gram, onehot)
    return float(np.mean((xte @ coef).argmax(axis=1) == test.labels))

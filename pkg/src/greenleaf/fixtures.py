"""Synthetic four-class image sets (tinted noise textures) for tests and CLI smoke runs."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .data import ArrayDataset

CLASS_NAMES = ["BrownSpot", "Healthy", "Hispa", "LeafBlast"]

# per-class RGB tint and stripe orientation (radians)
_TINTS = np.array([[0.55, 0.35, 0.15], [0.25, 0.65, 0.25], [0.70, 0.70, 0.55], [0.35, 0.40, 0.60]])
_ANGLES = np.array([0.0, np.pi / 2, np.pi / 4, 3 * np.pi / 4])


def texture(class_id: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """(3,size,size) float image in [0,1]: class tint + oriented stripes + smoothed noise."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    a = _ANGLES[class_id % 4] + rng.normal(0, 0.1)
    freq = 4 + 2 * (class_id % 4)
    stripes = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (xx * np.cos(a) + yy * np.sin(a)) + rng.uniform(0, 6.3))
    noise = rng.random((3, size, size))
    noise = (noise + np.roll(noise, 1, 1) + np.roll(noise, 1, 2) + np.roll(noise, (1, 1), (1, 2))) / 4
    tint = _TINTS[class_id % 4][:, None, None]
    img = 0.55 * tint + 0.25 * stripes[None] * tint + 0.2 * noise
    return np.clip(img, 0.0, 1.0)


def synthetic_arrays(per_class: int = 8, resolution: int = 64, num_classes: int = 4, seed: int = 0,
                     dtype=np.float32) -> ArrayDataset:
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for c in range(num_classes):
        for _ in range(per_class):
            images.append(texture(c, resolution, rng))
            labels.append(c)
    names = [CLASS_NAMES[c] if c < 4 else f"class{c}" for c in range(num_classes)]
    return ArrayDataset(np.stack(images).astype(dtype), np.array(labels, dtype=np.int64), names)


def write_fixture(root: str | Path, per_class: int | list[int] = 8, size: int = 64,
                  seed: int = 0) -> Path:
    """Write ``root/<class>/<class>_NNN.png``; ``per_class`` may list a count per class."""
    root = Path(root)
    counts = per_class if isinstance(per_class, list) else [per_class] * len(CLASS_NAMES)
    rng = np.random.default_rng(seed)
    for c, (name, n) in enumerate(zip(CLASS_NAMES, counts)):
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            arr = (texture(c, size, rng).transpose(1, 2, 0) * 255).round().astype(np.uint8)
            Image.fromarray(arr).save(d / f"{name}_{i:03d}.png")
    return root

"""Image-folder datasets: scanning, balancing, splitting, loading and augmentation."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image, UnidentifiedImageError

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png"}


class DatasetError(ValueError):
    pass


class DecodeError(DatasetError):
    pass


@dataclass
class DatasetIndex:
    class_names: list[str]
    records: list[tuple[str, int]]
    provenance: str = ""
    skipped: int = 0

    def __post_init__(self):
        k = len(self.class_names)
        for path, cid in self.records:
            if not 0 <= cid < k:
                raise DatasetError(f"{path}: class id {cid} outside [0, {k})")
        if len({p for p, _ in self.records}) != len(self.records):
            raise DatasetError("duplicate paths in dataset index")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labels(self) -> np.ndarray:
        return np.array([c for _, c in self.records], dtype=np.int64)

    def counts(self) -> list[int]:
        return np.bincount(self.labels, minlength=len(self.class_names)).tolist()

    def by_class(self) -> list[list[tuple[str, int]]]:
        groups: list[list[tuple[str, int]]] = [[] for _ in self.class_names]
        for rec in self.records:
            groups[rec[1]].append(rec)
        return groups

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({
            "class_names": self.class_names,
            "records": [[p, c] for p, c in self.records],
            "provenance": self.provenance,
        }, indent=1))

    @classmethod
    def from_json(cls, path: str | Path) -> "DatasetIndex":
        raw = json.loads(Path(path).read_text())
        return cls(list(raw["class_names"]), [(str(p), int(c)) for p, c in raw["records"]],
                   raw.get("provenance", ""))


def scan_dataset(root: str | Path) -> DatasetIndex:
    """One class per immediate subdirectory of ``root``, in sorted order."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist or is not a directory")
    try:
        class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    except OSError as e:
        raise DatasetError(f"cannot read {root}: {e}") from e
    if not class_dirs:
        raise DatasetError(f"{root} has no class subdirectories")
    records, skipped = [], 0
    for cid, d in enumerate(class_dirs):
        for f in sorted(d.iterdir()):
            if f.is_file() and f.suffix.lower() in IMAGE_SUFFIXES:
                records.append((str(f), cid))
            else:
                skipped += 1
    if skipped:
        log.warning("skipped %d non-image entries under %s", skipped, root)
    return DatasetIndex([d.name for d in class_dirs], records, f"scan:{root}", skipped)


def balance_downsample(index: DatasetIndex, seed: int = 0) -> DatasetIndex:
    """Reduce every class to the size of the smallest one (seeded, without replacement)."""
    groups = index.by_class()
    for name, g in zip(index.class_names, groups):
        if not g:
            raise DatasetError(f"class {name!r} has no images")
    n = min(len(g) for g in groups)
    rng = np.random.default_rng(seed)
    records = []
    for g in groups:
        if len(g) == n:
            records.extend(g)
        else:
            keep = np.sort(rng.choice(len(g), size=n, replace=False))
            records.extend(g[i] for i in keep)
    return DatasetIndex(index.class_names, records, f"{index.provenance}|balance(seed={seed})")


def stratified_split(index: DatasetIndex, val_fraction: float = 0.2,
                     seed: int = 0) -> tuple[DatasetIndex, DatasetIndex]:
    if not 0 < val_fraction < 1:
        raise DatasetError(f"val_fraction must be in (0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    train, val = [], []
    for name, g in zip(index.class_names, index.by_class()):
        n_val = int(math.floor(len(g) * val_fraction + 0.5))
        if g and n_val >= len(g):
            raise DatasetError(f"class {name!r} would have no training items")
        order = rng.permutation(len(g))
        val.extend(g[i] for i in sorted(order[:n_val]))
        train.extend(g[i] for i in sorted(order[n_val:]))
    tag = f"{index.provenance}|split({val_fraction},seed={seed})"
    return (DatasetIndex(index.class_names, train, tag + ":train"),
            DatasetIndex(index.class_names, val, tag + ":val"))


# ----------------------------------------------------------------- images


def bilinear_sample(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample a (C,H,W) image at fractional coordinates, clamping to the nearest edge."""
    _, h, w = img.shape
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[None]
    fx = (xs - x0)[None]
    top = img[:, y0, x0] * (1 - fx) + img[:, y0, x1] * fx
    bottom = img[:, y1, x0] * (1 - fx) + img[:, y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def resize_bilinear(img: np.ndarray, size: int) -> np.ndarray:
    """Half-pixel-centre bilinear resize of a (C,H,W) array to (C,size,size)."""
    _, h, w = img.shape
    if (h, w) == (size, size):
        return img.copy()
    ys = (np.arange(size) + 0.5) * (h / size) - 0.5
    xs = (np.arange(size) + 0.5) * (w / size) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return bilinear_sample(img, yy, xx)


def load_image(path: str | Path) -> np.ndarray:
    """RGB image as float64 (3,H,W) in [0,1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError) as e:
        raise DecodeError(f"cannot decode image {path}: {e}") from e
    return arr.transpose(2, 0, 1)


def load_and_resize(path: str | Path, resolution: int) -> np.ndarray:
    return resize_bilinear(load_image(path), resolution)[None]


# ----------------------------------------------------------------- augmentation


@dataclass(frozen=True)
class AugmentationConfig:
    rotation_deg: float = 30.0
    zoom: float = 0.15
    width_shift: float = 0.2
    height_shift: float = 0.2
    shear: float = 0.15
    horizontal_flip: bool = True

    def __post_init__(self):
        for k in ("rotation_deg", "zoom", "width_shift", "height_shift", "shear"):
            if getattr(self, k) < 0:
                raise DatasetError(f"augmentation range {k} must be >= 0")
        if self.zoom >= 1:
            raise DatasetError("zoom range must be < 1")

    @classmethod
    def none(cls) -> "AugmentationConfig":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, False)


@dataclass(frozen=True)
class AugmentParams:
    rotation_deg: float = 0.0
    zoom: float = 1.0
    shift_x: float = 0.0  # fraction of width
    shift_y: float = 0.0  # fraction of height
    shear: float = 0.0
    flip: bool = False

    def matrix(self, height: int, width: int) -> np.ndarray:
        """Forward 3x3 map in centred (x, y) pixel coords.

        Applied in order: shift, rotation, zoom, shear, then horizontal flip.
        """
        th = math.radians(self.rotation_deg)
        shift = np.array([[1, 0, self.shift_x * width], [0, 1, self.shift_y * height], [0, 0, 1.0]])
        rot = np.array([[math.cos(th), -math.sin(th), 0], [math.sin(th), math.cos(th), 0], [0, 0, 1.0]])
        zoom = np.diag([self.zoom, self.zoom, 1.0])
        shear = np.array([[1, self.shear, 0], [0, 1, 0], [0, 0, 1.0]])
        flip = np.diag([-1.0 if self.flip else 1.0, 1.0, 1.0])
        return flip @ shear @ zoom @ rot @ shift


_TRANSFORMS = ("rotation", "zoom", "width_shift", "height_shift", "shear", "flip")


def _substreams(rng: np.random.Generator | int) -> dict[str, np.random.Generator]:
    if isinstance(rng, np.random.Generator):
        entropy = int(rng.integers(0, 2 ** 63))
    else:
        entropy = int(rng)
    seqs = np.random.SeedSequence(entropy).spawn(len(_TRANSFORMS))
    return {k: np.random.default_rng(s) for k, s in zip(_TRANSFORMS, seqs)}


def sample_augmentation(cfg: AugmentationConfig, rng: np.random.Generator | int) -> AugmentParams:
    """Draw one transform; each transform reads its own sub-stream of ``rng``."""
    s = _substreams(rng)
    return AugmentParams(
        rotation_deg=float(s["rotation"].uniform(-cfg.rotation_deg, cfg.rotation_deg)),
        zoom=float(s["zoom"].uniform(1 - cfg.zoom, 1 + cfg.zoom)),
        shift_x=float(s["width_shift"].uniform(-cfg.width_shift, cfg.width_shift)),
        shift_y=float(s["height_shift"].uniform(-cfg.height_shift, cfg.height_shift)),
        shear=float(s["shear"].uniform(-cfg.shear, cfg.shear)),
        flip=bool(cfg.horizontal_flip and s["flip"].random() < 0.5),
    )


def apply_augmentation(image: np.ndarray, params: AugmentParams) -> np.ndarray:
    """Resample a (C,H,W) or (1,C,H,W) image through the inverse affine map."""
    batched = image.ndim == 4
    img = image[0] if batched else image
    _, h, w = img.shape
    m = params.matrix(h, w)
    if np.array_equal(m, np.eye(3)):
        out = img.copy()
    else:
        inv = np.linalg.inv(m)
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        yy, xx = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
        src_x = inv[0, 0] * xx + inv[0, 1] * yy + inv[0, 2] + cx
        src_y = inv[1, 0] * xx + inv[1, 1] * yy + inv[1, 2] + cy
        out = np.clip(bilinear_sample(img, src_y, src_x), 0.0, 1.0).astype(img.dtype, copy=False)
    return out[None] if batched else out


def augment(image: np.ndarray, cfg: AugmentationConfig, rng: np.random.Generator | int,
            return_params: bool = False):
    params = sample_augmentation(cfg, rng)
    out = apply_augmentation(image, params)
    return (out, params) if return_params else out


# ----------------------------------------------------------------- in-memory sets and batching


@dataclass
class ArrayDataset:
    images: np.ndarray  # (N,3,R,R)
    labels: np.ndarray  # (N,)
    class_names: list[str] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)


def load_index(index: DatasetIndex, resolution: int, dtype=np.float32,
               skip_failures: bool = False) -> ArrayDataset:
    images, labels, failures = [], [], []
    for path, cid in index.records:
        try:
            images.append(load_and_resize(path, resolution)[0].astype(dtype))
        except DecodeError as e:
            if not skip_failures:
                raise
            log.warning("%s", e)
            failures.append(path)
            continue
        labels.append(cid)
    arr = np.stack(images) if images else np.zeros((0, 3, resolution, resolution), dtype)
    return ArrayDataset(arr, np.array(labels, dtype=np.int64), list(index.class_names), failures)


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


def batches(data: ArrayDataset | DatasetIndex, batch_size: int = 32, shuffle_seed: int | None = 0,
            resolution: int | None = None, augmentation: AugmentationConfig | None = None,
            epoch: int = 0) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """One epoch of (images, labels) batches; the final partial batch is kept.

    Augmentation randomness for a record depends only on (seed, epoch, record index).
    """
    if batch_size < 1:
        raise DatasetError("batch_size must be >= 1")
    if isinstance(data, DatasetIndex):
        if resolution is None:
            raise DatasetError("resolution is required when batching a DatasetIndex")
        data = load_index(data, resolution)
    n = len(data)
    seed = 0 if shuffle_seed is None else shuffle_seed
    order = np.arange(n) if shuffle_seed is None else \
        np.random.default_rng(derive_seed(shuffle_seed, epoch)).permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        imgs = data.images[idx]
        if augmentation is not None:
            imgs = np.stack([apply_augmentation(img, sample_augmentation(
                augmentation, derive_seed(seed, epoch, i))) for img, i in zip(imgs, idx)])
        yield imgs, data.labels[idx]


__all__ = [
    "DatasetIndex", "DatasetError", "DecodeError", "scan_dataset", "balance_downsample",
    "stratified_split", "load_image", "load_and_resize", "resize_bilinear", "bilinear_sample",
    "AugmentationConfig", "AugmentParams", "sample_augmentation", "apply_augmentation", "augment",
    "ArrayDataset", "load_index", "batches", "derive_seed",
]

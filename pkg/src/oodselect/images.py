"""Image dataset container and IO.

Datasets are dense uint8 tensors of shape (n, h, w, c) with optional
integer labels. Two on-disk forms are supported: a raw tensor file for
cheap deterministic round-trips, and a directory of image files with a
label manifest. A seeded synthetic generator stands in for real data in
tests and in the offline reproduction pipeline.
"""

from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

MAGIC = b"MOID"
_HEADER = struct.Struct("<4sIIII")


@dataclass
class ImageDataset:
    name: str
    images: np.ndarray  # (n, h, w, c) uint8
    labels: np.ndarray | None = None  # (n,) int32

    def __post_init__(self) -> None:
        img = np.asarray(self.images)
        if img.ndim != 4:
            raise ValidationError(f"{self.name}: images must be (n, h, w, c), got {img.shape}")
        if img.dtype != np.uint8:
            raise ValidationError(f"{self.name}: images must be uint8, got {img.dtype}")
        if img.shape[0] < 1:
            raise ValidationError(f"{self.name}: dataset has no images")
        if img.shape[3] not in (1, 3):
            raise ValidationError(f"{self.name}: channel count must be 1 or 3, got {img.shape[3]}")
        self.images = img
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int32)
            if lab.shape != (img.shape[0],):
                raise ValidationError(
                    f"{self.name}: labels shape {lab.shape} does not match {img.shape[0]} images"
                )
            self.labels = lab

    @property
    def num_images(self) -> int:
        return int(self.images.shape[0])

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])  # type: ignore[return-value]

    def num_classes(self) -> int:
        """Distinct label count; 0 when the dataset is unlabeled."""
        if self.labels is None:
            return 0
        return int(np.unique(self.labels).size)

    def slice(self, start: int, stop: int, name: str | None = None) -> "ImageDataset":
        lab = None if self.labels is None else self.labels[start:stop]
        return ImageDataset(name or self.name, self.images[start:stop], lab)


def _labels_path(path: str) -> str:
    return path + ".labels"


def save_dataset(ds: ImageDataset, path: str) -> None:
    """Write the raw tensor file; labels go to a sibling `<path>.labels`."""
    n, h, w, c = ds.images.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, h, w, c))
        fh.write(ds.images.tobytes())
    if ds.labels is not None:
        with open(_labels_path(path), "wb") as fh:
            fh.write(ds.labels.astype("<i4").tobytes())
    elif os.path.exists(_labels_path(path)):
        os.remove(_labels_path(path))


def load_dataset(path: str, name: str | None = None) -> ImageDataset:
    """Read a raw tensor file, or a directory of image files with labels.csv."""
    if os.path.isdir(path):
        return _load_directory(path, name)
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValidationError(f"{path}: truncated header ({len(header)} bytes)")
        magic, n, h, w, c = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValidationError(f"{path}: bad magic {magic!r}")
        expected = n * h * w * c
        payload = fh.read()
    if len(payload) != expected:
        raise ValidationError(
            f"{path}: payload is {len(payload)} bytes, header declares {expected}"
        )
    images = np.frombuffer(payload, dtype=np.uint8).reshape(n, h, w, c)
    labels = None
    lp = _labels_path(path)
    if os.path.exists(lp):
        raw = np.fromfile(lp, dtype="<i4")
        if raw.shape != (n,):
            raise ValidationError(f"{lp}: expected {n} labels, found {raw.size}")
        labels = raw.astype(np.int32)
    return ImageDataset(name or os.path.basename(path), images, labels)


def _load_directory(path: str, name: str | None) -> ImageDataset:
    from PIL import Image

    files = sorted(
        f for f in os.listdir(path)
        if f.lower().endswith((".png", ".ppm", ".pgm", ".bmp", ".jpg", ".jpeg"))
    )
    if not files:
        raise ValidationError(f"{path}: no image files found")
    arrays = []
    for f in files:
        with Image.open(os.path.join(path, f)) as im:
            arr = np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        arrays.append(arr.astype(np.uint8))
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValidationError(f"{path}: mixed image shapes {sorted(shapes)}")
    images = np.stack(arrays)
    labels = None
    manifest = os.path.join(path, "labels.csv")
    if os.path.exists(manifest):
        by_file: dict[str, int] = {}
        with open(manifest, "r", encoding="utf-8", newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0] == "filename":
                    continue
                by_file[rec[0]] = int(rec[1])
        missing = [f for f in files if f not in by_file]
        if missing:
            raise ValidationError(f"{manifest}: no label for {missing[0]}")
        labels = np.array([by_file[f] for f in files], dtype=np.int32)
    return ImageDataset(name or os.path.basename(os.path.normpath(path)), images, labels)


def synth_dataset(
    seed: int,
    n: int,
    h: int,
    w: int,
    c: int,
    num_classes: int,
    noise: int = 25,
    name: str | None = None,
) -> ImageDataset:
    """Seeded synthetic dataset: per-class base colors plus uniform pixel noise.

    noise=0 makes every image constant (all pixels equal its class color),
    which is the degenerate case several feature tests rely on.
    """
    if n < 1 or num_classes < 1:
        raise ValidationError("synth_dataset needs n >= 1 and num_classes >= 1")
    if not 0 <= noise <= 255:
        raise ValidationError(f"noise must be in [0, 255], got {noise}")
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 256, size=(num_classes, c), dtype=np.int64)
    labels = rng.integers(0, num_classes, size=n, dtype=np.int64)
    images = np.broadcast_to(base[labels][:, None, None, :], (n, h, w, c)).copy()
    if noise > 0:
        images = images + rng.integers(-noise, noise + 1, size=(n, h, w, c), dtype=np.int64)
    images = np.clip(images, 0, 255).astype(np.uint8)
    return ImageDataset(name or f"synth-{seed}", images, labels.astype(np.int32))


def resize_nearest(images: np.ndarray, h2: int, w2: int) -> np.ndarray:
    """Nearest-neighbor resize of an image stack; source index = (i * src) // dst."""
    n, h, w, c = images.shape
    rows = (np.arange(h2) * h) // h2
    cols = (np.arange(w2) * w) // w2
    return images[:, rows][:, :, cols]


def convert_channels(images: np.ndarray, c2: int) -> np.ndarray:
    """Map between 1 and 3 channels: replicate gray, or average RGB (rounded)."""
    c = images.shape[3]
    if c == c2:
        return images
    if c == 1 and c2 == 3:
        return np.repeat(images, 3, axis=3)
    if c == 3 and c2 == 1:
        mean = images.astype(np.float64).mean(axis=3, keepdims=True)
        return np.clip(np.rint(mean), 0, 255).astype(np.uint8)
    raise ValidationError(f"cannot convert {c} channels to {c2}")


def conform(ds: ImageDataset, shape: Sequence[int], name: str | None = None) -> ImageDataset:
    """Resize and channel-convert a dataset onto a target (h, w, c)."""
    h2, w2, c2 = shape
    images = resize_nearest(ds.images, h2, w2)
    images = convert_channels(images, c2)
    return ImageDataset(name or ds.name, images, ds.labels)


def mix_datasets(a: ImageDataset, b: ImageDataset, name: str) -> ImageDataset:
    """Concatenate two stacks of identical shape; labels are dropped."""
    if a.shape != b.shape:
        raise ValidationError(f"cannot mix shapes {a.shape} and {b.shape}")
    return ImageDataset(name, np.concatenate([a.images, b.images], axis=0))

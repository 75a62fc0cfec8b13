"""Labelled image corpus: a seeded procedural generator plus directory loading.

The bundled toy corpus is 8 texture/shape classes, generated rather than
shipped: square-wave stripes in three orientations, checkerboards, disks,
rectangles, crosshatch line grids and concentric rings. Every class
carries strong edge detail that is predictable from the low-frequency
band, which is what the conditional reconstructors are meant to learn.

Class labels come from directory names (sorted order gives contiguous
integer labels). The train/validation split is a seeded stratified
shuffle whose global cut is exactly round(0.8 * N).
"""

import os
import warnings
from dataclasses import dataclass

import numpy as np

from .ppm import read_image, write_image

TOY_CLASSES = (
    "00_hstripes",
    "01_vstripes",
    "02_dstripes",
    "03_checker",
    "04_disks",
    "05_squares",
    "06_crosshatch",
    "07_rings",
)


def _two_colors(rng):
    c0 = rng.uniform(0.03, 0.30, size=3)
    c1 = rng.uniform(0.70, 0.97, size=3)
    return c0, c1


def _mix(c0, c1, weight):
    return c0 + (c1 - c0) * weight[:, :, None]


def _square_wave(coord, period, phase, edge=0.7):
    """0/1 wave with a sub-pixel linear transition: sharp but not aliased."""
    s = np.sin(2.0 * np.pi * coord / period + phase)
    return np.clip(s * period / (2.0 * np.pi * edge) + 0.5, 0.0, 1.0)


def _grid(size):
    return np.mgrid[0:size, 0:size].astype(np.float64)


def _stripes(size, rng, orientation):
    yy, xx = _grid(size)
    period = rng.uniform(6.0, 12.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    coord = {"h": yy, "v": xx, "d": (xx + yy) / np.sqrt(2.0)}[orientation]
    return _mix(*_two_colors(rng), _square_wave(coord, period, phase))


def _checker(size, rng):
    yy, xx = _grid(size)
    period = rng.uniform(8.0, 14.0)  # cell edge is period / 2
    py, px = rng.uniform(0.0, 2.0 * np.pi, size=2)
    wy = _square_wave(yy, period, py)
    wx = _square_wave(xx, period, px)
    weight = wx * (1.0 - wy) + wy * (1.0 - wx)  # soft xor
    return _mix(*_two_colors(rng), weight)


def _disks(size, rng):
    c0, c1 = _two_colors(rng)
    img = np.ones((size, size, 3)) * c0
    yy, xx = _grid(size)
    for _ in range(int(rng.integers(3, 7))):
        cy, cx = rng.uniform(6, size - 6, size=2)
        radius = rng.uniform(4, size / 5)
        dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        mask = np.clip(radius - dist + 0.5, 0.0, 1.0)  # 1px soft edge
        color = rng.uniform(0.55, 0.95, size=3)
        img = img * (1 - mask[:, :, None]) + color * mask[:, :, None]
    return img


def _squares(size, rng):
    c0, _ = _two_colors(rng)
    img = np.ones((size, size, 3)) * c0
    for _ in range(int(rng.integers(2, 6))):
        h = int(rng.integers(6, size // 3))
        w = int(rng.integers(6, size // 3))
        y0 = int(rng.integers(0, size - h))
        x0 = int(rng.integers(0, size - w))
        img[y0 : y0 + h, x0 : x0 + w] = rng.uniform(0.55, 0.95, size=3)
    return img


def _crosshatch(size, rng):
    yy, xx = _grid(size)
    period = rng.uniform(7.0, 12.0)
    py, px = rng.uniform(0.0, 2.0 * np.pi, size=2)
    duty = rng.uniform(0.25, 0.4)  # line width fraction of the period
    ly = (_square_wave(yy, period, py) > 1.0 - duty).astype(float)
    lx = (_square_wave(xx, period, px) > 1.0 - duty).astype(float)
    weight = np.maximum(ly, lx)
    return _mix(*_two_colors(rng), weight)


def _rings(size, rng):
    yy, xx = _grid(size)
    cy, cx = rng.uniform(size * 0.25, size * 0.75, size=2)
    period = rng.uniform(6.0, 12.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    radius = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    return _mix(*_two_colors(rng), _square_wave(radius, period, phase))


_BUILDERS = {
    "00_hstripes": lambda s, r: _stripes(s, r, "h"),
    "01_vstripes": lambda s, r: _stripes(s, r, "v"),
    "02_dstripes": lambda s, r: _stripes(s, r, "d"),
    "03_checker": _checker,
    "04_disks": _disks,
    "05_squares": _squares,
    "06_crosshatch": _crosshatch,
    "07_rings": _rings,
}


def generate_toy_corpus(out_dir, per_class=32, size=64, seed=0):
    """Write the seeded toy corpus as PPM files, one directory per class."""
    rng = np.random.default_rng(seed)
    written = []
    for name in TOY_CLASSES:
        cls_dir = os.path.join(out_dir, name)
        os.makedirs(cls_dir, exist_ok=True)
        for i in range(per_class):
            img = np.clip(_BUILDERS[name](size, rng), 0.0, 1.0)
            path = os.path.join(cls_dir, f"{name}_{i:03d}.ppm")
            write_image(path, img)
            written.append(path)
    return written


@dataclass
class Corpus:
    images: np.ndarray  # (N, H, W, C)
    labels: np.ndarray  # (N,) contiguous ints
    class_names: list
    files: list
    skipped: list


def _center_crop_pow2(img):
    side = 1 << (min(img.shape[0], img.shape[1]).bit_length() - 1)
    y0 = (img.shape[0] - side) // 2
    x0 = (img.shape[1] - side) // 2
    return img[y0 : y0 + side, x0 : x0 + side]


def load_corpus(corpus_dir, crop_pow2=True) -> Corpus:
    """Read every class directory; unreadable or misshaped files are skipped
    with a warning and recorded in ``skipped``."""
    class_names = sorted(
        d for d in os.listdir(corpus_dir) if os.path.isdir(os.path.join(corpus_dir, d))
    )
    if not class_names:
        raise ValueError(f"{corpus_dir}: no class directories found")
    images, labels, files, skipped = [], [], [], []
    extents = None
    for label, name in enumerate(class_names):
        cls_dir = os.path.join(corpus_dir, name)
        for fname in sorted(os.listdir(cls_dir)):
            if not fname.lower().endswith((".ppm", ".pgm")):
                continue
            path = os.path.join(cls_dir, fname)
            try:
                img = read_image(path)
            except (ValueError, OSError) as exc:
                warnings.warn(f"skipping {path}: {exc}")
                skipped.append(path)
                continue
            if crop_pow2:
                img = _center_crop_pow2(img)
            if img.shape[0] % 2 or img.shape[1] % 2:
                warnings.warn(f"skipping {path}: odd extents {img.shape[:2]}")
                skipped.append(path)
                continue
            if extents is None:
                extents = img.shape
            if img.shape != extents:
                warnings.warn(f"skipping {path}: extents {img.shape} != corpus {extents}")
                skipped.append(path)
                continue
            images.append(img)
            labels.append(label)
            files.append(path)
    if not images:
        raise ValueError(f"{corpus_dir}: no usable images")
    return Corpus(
        images=np.stack(images),
        labels=np.asarray(labels, dtype=int),
        class_names=class_names,
        files=files,
        skipped=skipped,
    )


def split_indices(labels, seed):
    """Seeded stratified 80/20 split; returns (train_idx, val_idx).

    The global train count is exactly round(0.8 * N); per-class quotas are
    assigned by largest remainder so no class is starved of validation
    examples.
    """
    labels = np.asarray(labels)
    n = labels.size
    rng = np.random.default_rng(seed)
    n_train = int(round(0.8 * n))

    classes = np.unique(labels)
    exact = {c: 0.8 * np.count_nonzero(labels == c) for c in classes}
    quota = {c: int(np.floor(exact[c])) for c in classes}
    short = n_train - sum(quota.values())
    order = sorted(classes, key=lambda c: (-(exact[c] - quota[c]), c))
    for c in order[:short]:
        quota[c] += 1

    train, val = [], []
    for c in classes:
        members = rng.permutation(np.flatnonzero(labels == c))
        train.extend(members[: quota[c]])
        val.extend(members[quota[c] :])
    return np.sort(np.asarray(train, dtype=int)), np.sort(np.asarray(val, dtype=int))

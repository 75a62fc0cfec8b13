"""Pixel-space baseline: interpolation resampling plus a residual refiner.

Resampling uses half-pixel-center alignment: output sample i reads the
input at position (i + 0.5) * (n_in / n_out) - 0.5, clamped at the edges.
For a factor-2 reduction this averages adjacent pixel pairs. Both
directions preserve constant images exactly and are linear in the image.

Decoding is residual-form: one level doubles the extent by bilinear
upsampling and adds the refiner's predicted correction, so a zero refiner
degrades exactly to plain interpolation. Unlike the wavelet path, the
learned component here runs at the full target extent.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .pyramid import encode
from .wavelet import lowpass_reconstruction


@dataclass
class PixelCode:
    """Latent of the pixel path: the subsampled image plus geometry."""

    levels: int
    low: np.ndarray
    original_height: int
    original_width: int
    channels: int


def _resample_axis(arr, n_out, axis):
    n_in = arr.shape[axis]
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w1 = src - i0
    lo = np.take(arr, i0, axis=axis)
    hi = np.take(arr, i1, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = n_out
    w1 = w1.reshape(shape)
    return lo * (1.0 - w1) + hi * w1


def _as_float_image(image):
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise GeometryError(f"expected an image array, got shape {np.shape(image)}")
    return x


def bilinear_downsample(image, factor):
    """Reduce both extents by ``factor`` with half-pixel-center bilinear sampling."""
    x = _as_float_image(image)
    if factor < 2:
        raise GeometryError(f"downsample factor must be >= 2, got {factor}")
    h, w = x.shape[0], x.shape[1]
    if h % factor or w % factor:
        raise GeometryError(f"extents {h}x{w} not divisible by factor {factor}")
    out = _resample_axis(x, h // factor, 0)
    return _resample_axis(out, w // factor, 1)


def bilinear_upsample(image, factor):
    """Grow both extents by ``factor``; constants are preserved exactly."""
    x = _as_float_image(image)
    if factor < 2:
        raise GeometryError(f"upsample factor must be >= 2, got {factor}")
    out = _resample_axis(x, x.shape[0] * factor, 0)
    return _resample_axis(out, x.shape[1] * factor, 1)


def pixel_encode(image, levels) -> PixelCode:
    x = _as_float_image(image)
    h, w, c = x.shape
    f = 2**levels
    if levels < 1:
        raise GeometryError(f"level count must be >= 1, got {levels}")
    if h % f or w % f:
        raise GeometryError(f"extents {h}x{w} not divisible by 2^{levels}")
    return PixelCode(
        levels=levels,
        low=bilinear_downsample(x, f),
        original_height=h,
        original_width=w,
        channels=c,
    )


def pixel_decode_level(low, refiner=None):
    """One 2x upsampling step: interpolation plus the refiner's residual."""
    x = _as_float_image(low)
    up = bilinear_upsample(x, 2)
    if refiner is None:
        return up
    if refiner.input_extent != up.shape[0] or refiner.input_extent != up.shape[1]:
        raise GeometryError(
            f"refiner expects extent {refiner.input_extent}, upsampled image is "
            f"{up.shape[0]}x{up.shape[1]}"
        )
    if refiner.channels != up.shape[2]:
        raise GeometryError(
            f"refiner expects {refiner.channels} channels, image has {up.shape[2]}"
        )
    return up + refiner.predict_residual(up)


def pixel_decode(code: PixelCode, refiners):
    """Compose per-level refiners innermost-first, mirroring the wavelet path."""
    if len(refiners) != code.levels:
        raise GeometryError(f"code has {code.levels} levels but {len(refiners)} refiners given")
    cur = code.low
    for level in range(code.levels, 0, -1):
        cur = pixel_decode_level(cur, refiners[level - 1])
    return cur


def compare_information_content(images, levels, fb, image_ids=None):
    """Deterministic-reconstruction MSE of both encodings, per image and mean.

    Wavelet side: keep only the recursively retained low band, invert with
    the detail bands zeroed. Pixel side: bilinear subsample then the same
    per-level interpolation the zero-refiner decoder applies.
    """
    ids = list(image_ids) if image_ids is not None else [str(i) for i in range(len(images))]
    if len(ids) != len(images):
        raise ValueError("image_ids must match images one-to-one")
    rows = []
    for image_id, img in zip(ids, images):
        x = _as_float_image(img)
        tl = encode(x, levels, fb).tl
        for _ in range(levels):
            tl = lowpass_reconstruction(tl, fb)
        wavelet_mse = float(((tl - x) ** 2).mean())
        low = pixel_encode(x, levels).low
        for _ in range(levels):
            low = bilinear_upsample(low, 2)
        pixel_mse = float(((low - x) ** 2).mean())
        rows.append({"image_id": image_id, "wavelet_mse": wavelet_mse, "pixel_mse": pixel_mse})
    summary = {
        "image_id": "mean",
        "wavelet_mse": float(np.mean([r["wavelet_mse"] for r in rows])) if rows else 0.0,
        "pixel_mse": float(np.mean([r["pixel_mse"] for r in rows])) if rows else 0.0,
    }
    return rows, summary


def write_compare_csv(rows, summary, path_or_buf):
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "wavelet_mse", "pixel_mse"])
        for row in list(rows) + [summary]:
            writer.writerow(
                [row["image_id"], f"{row['wavelet_mse']:.10g}", f"{row['pixel_mse']:.10g}"]
            )
    finally:
        if own:
            fh.close()

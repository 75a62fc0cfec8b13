"""Recursive low-band encoder, per-level decoder assembly, and latent containers.

The encoder keeps only the top-left (low/low) band at each of L transform
levels, so the latent holds exactly 1/4^L of the input values. Decoding
runs innermost-first: at every level a patch source supplies the three
missing detail bands (as base patches), each band is reassembled by
inverse transforms, and one more inverse transform doubles the extent.

Patch order is pinned: depth-first over the quad tree visiting
(tl, tr, bl, br), leaves emitted in visit order; bands ordered
(tr, bl, br). Containers and model heads rely on this order.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    ContainerError,
    GeometryError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .wavelet import FilterBank, QuadDecomposition, dwt2d, idwt2d, make_filter_bank


@dataclass
class PyramidCode:
    """Lossy latent: the retained top-left band plus original geometry."""

    levels: int
    tl: np.ndarray  # (H / 2^L, W / 2^L, C)
    original_height: int
    original_width: int
    channels: int
    wavelet_name: str


@dataclass
class PatchGrid:
    """Base patches of one band in the pinned depth-first quad order."""

    patches: list
    grid_rows: int
    grid_cols: int
    base_size: int


def _to_hwc(image):
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[2] not in (1, 3):
        raise GeometryError(f"expected (H, W) or (H, W, C) image, got shape {np.shape(image)}")
    return x


def _check_divisible(h, w, levels):
    if levels < 1:
        raise GeometryError(f"level count must be >= 1, got {levels}")
    f = 2**levels
    if h % f != 0:
        raise GeometryError(f"height {h} not divisible by 2^{levels}")
    if w % f != 0:
        raise GeometryError(f"width {w} not divisible by 2^{levels}")


def encode(image, levels, fb: FilterBank) -> PyramidCode:
    """Apply ``levels`` transforms, retaining only the top-left band each time."""
    x = _to_hwc(image)
    h, w, c = x.shape
    _check_divisible(h, w, levels)
    tl = x
    for _ in range(levels):
        tl = dwt2d(tl, fb).tl
    return PyramidCode(
        levels=levels,
        tl=tl,
        original_height=h,
        original_width=w,
        channels=c,
        wavelet_name=fb.name,
    )


def full_decompose(image, levels, fb: FilterBank):
    """All four bands at every level; entry l-1 is the transform of level l-1's TL."""
    x = _to_hwc(image)
    _check_divisible(x.shape[0], x.shape[1], levels)
    quads = []
    cur = x
    for _ in range(levels):
        q = dwt2d(cur, fb)
        quads.append(q)
        cur = q.tl
    return quads


def recompose(quads, fb: FilterBank, tl=None):
    """Invert :func:`full_decompose`; ``tl`` overrides the innermost band."""
    cur = quads[-1].tl if tl is None else tl
    for q in reversed(quads):
        cur = idwt2d(QuadDecomposition(tl=cur, tr=q.tr, bl=q.bl, br=q.br), fb)
    return cur


def slice_to_base_patches(band, base_size, fb: FilterBank) -> PatchGrid:
    """Transform a square band down until every leaf is base_size x base_size."""
    b = _to_hwc(band)
    h, w = b.shape[0], b.shape[1]
    if h != w:
        raise GeometryError(f"patch slicing requires a square band, got {h}x{w}")
    ratio = h // base_size
    if base_size * ratio != h or ratio & (ratio - 1):
        raise GeometryError(
            f"band extent {h} is not a power-of-two multiple of base size {base_size}"
        )

    def rec(x):
        if x.shape[0] == base_size:
            return [x]
        q = dwt2d(x, fb)
        return rec(q.tl) + rec(q.tr) + rec(q.bl) + rec(q.br)

    return PatchGrid(patches=rec(b), grid_rows=ratio, grid_cols=ratio, base_size=base_size)


def assemble_from_patches(grid: PatchGrid, fb: FilterBank):
    """Exact inverse of :func:`slice_to_base_patches`."""
    n = len(grid.patches)
    if n != grid.grid_rows * grid.grid_cols:
        raise GeometryError(
            f"patch grid claims {grid.grid_rows}x{grid.grid_cols} but holds {n} patches"
        )
    if n & (n - 1) or (n.bit_length() - 1) % 2:
        # must be 4^d for the quad recursion
        raise GeometryError(f"patch count {n} is not a power of four")
    p = grid.base_size
    for patch in grid.patches:
        if np.shape(patch)[0] != p or np.shape(patch)[1] != p:
            raise GeometryError(
                f"patch shape {np.shape(patch)} does not match base size {p}"
            )

    def rec(patches):
        if len(patches) == 1:
            return np.asarray(patches[0], dtype=np.float64)
        quarter = len(patches) // 4
        return idwt2d(
            QuadDecomposition(
                tl=rec(patches[:quarter]),
                tr=rec(patches[quarter : 2 * quarter]),
                bl=rec(patches[2 * quarter : 3 * quarter]),
                br=rec(patches[3 * quarter :]),
            ),
            fb,
        )

    return rec(list(grid.patches))


class OraclePatchSource:
    """Patch source that returns the true detail bands of one level.

    Used to isolate transform error from model error: decoding with it
    must reproduce the parent band up to float roundoff.
    """

    def __init__(self, quad: QuadDecomposition, base_size, fb: FilterBank):
        self.band_extent = quad.tr.shape[0]
        self.channels = quad.tr.shape[2] if quad.tr.ndim == 3 else 1
        self._grids = tuple(
            slice_to_base_patches(band, base_size, fb) for band in (quad.tr, quad.bl, quad.br)
        )

    def predict_patch_grids(self, tl_image):
        return self._grids


class ZeroPatchSource:
    """Patch source predicting all-zero detail (pure low-pass decoding)."""

    def __init__(self, band_extent, channels, base_size):
        self.band_extent = band_extent
        self.channels = channels
        self.base_size = base_size

    def predict_patch_grids(self, tl_image):
        ratio = self.band_extent // self.base_size
        zero = np.zeros((self.base_size, self.base_size, self.channels))
        grid = PatchGrid(
            patches=[zero] * (ratio * ratio),
            grid_rows=ratio,
            grid_cols=ratio,
            base_size=self.base_size,
        )
        return grid, grid, grid


def decode_level(tl, model, fb: FilterBank):
    """Predict the missing bands from ``tl`` and invert one transform level."""
    x = _to_hwc(tl)
    if x.shape[0] != model.band_extent or x.shape[1] != model.band_extent:
        raise GeometryError(
            f"band extent {x.shape[0]}x{x.shape[1]} does not match the model's "
            f"{model.band_extent}x{model.band_extent}"
        )
    if x.shape[2] != model.channels:
        raise GeometryError(
            f"channel count {x.shape[2]} does not match the model's {model.channels}"
        )
    tr_grid, bl_grid, br_grid = model.predict_patch_grids(x)
    return idwt2d(
        QuadDecomposition(
            tl=x,
            tr=assemble_from_patches(tr_grid, fb),
            bl=assemble_from_patches(bl_grid, fb),
            br=assemble_from_patches(br_grid, fb),
        ),
        fb,
    )


def decode(code: PyramidCode, models, fb: FilterBank = None):
    """Compose decode_level from the innermost level out to full resolution.

    ``models[i]`` serves level i+1; the list must cover all code.levels.
    """
    if fb is None:
        fb = make_filter_bank(code.wavelet_name)
    if len(models) != code.levels:
        raise GeometryError(f"code has {code.levels} levels but {len(models)} models given")
    cur = code.tl
    for level in range(code.levels, 0, -1):
        cur = decode_level(cur, models[level - 1], fb)
    if cur.shape[:2] != (code.original_height, code.original_width):
        raise GeometryError(
            f"decoded extents {cur.shape[:2]} do not match recorded "
            f"({code.original_height}, {code.original_width})"
        )
    return cur


# ---------------------------------------------------------------------------
# Latent container
# ---------------------------------------------------------------------------

CODE_MAGIC = b"NSBC"
CODE_VERSION = 1


def serialize_code(code: PyramidCode) -> bytes:
    """Pack a PyramidCode; band values are stored as little-endian float32."""
    name = code.wavelet_name.encode("utf-8")
    if len(name) > 255:
        raise ValueError("wavelet name too long to serialize")
    tl = np.ascontiguousarray(code.tl, dtype="<f4")
    head = struct.pack(
        f"<4sHB{len(name)}sBIIB",
        CODE_MAGIC,
        CODE_VERSION,
        len(name),
        name,
        code.levels,
        code.original_height,
        code.original_width,
        code.channels,
    )
    return head + tl.tobytes()


def deserialize_code(data: bytes) -> PyramidCode:
    if len(data) < 4 or data[:4] != CODE_MAGIC:
        raise BadMagicError("latent container does not start with the NSBC magic")
    if len(data) < 7:
        raise TruncatedPayloadError("latent container truncated inside the header")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != CODE_VERSION:
        raise VersionMismatchError(
            f"latent container version {version}, this build reads {CODE_VERSION}"
        )
    name_len = data[6]
    pos = 7
    if len(data) < pos + name_len + 10:
        raise TruncatedPayloadError("latent container truncated inside the header")
    name = data[pos : pos + name_len].decode("utf-8")
    pos += name_len
    levels, height, width, channels = struct.unpack_from("<BIIB", data, pos)
    pos += 10
    f = 2**levels
    if levels < 1 or height % f or width % f:
        raise ContainerError(
            f"stored geometry {height}x{width} at {levels} levels is inconsistent"
        )
    count = (height // f) * (width // f) * channels
    expected = pos + 4 * count
    if len(data) < expected:
        raise TruncatedPayloadError(
            f"latent container holds {len(data) - pos} payload bytes, expected {4 * count}"
        )
    if len(data) > expected:
        raise ContainerError(f"latent container has {len(data) - expected} trailing bytes")
    tl = (
        np.frombuffer(data, dtype="<f4", count=count, offset=pos)
        .reshape(height // f, width // f, channels)
        .copy()
    )
    return PyramidCode(
        levels=levels,
        tl=tl,
        original_height=height,
        original_width=width,
        channels=channels,
        wavelet_name=name,
    )

"""1D/2D discrete wavelet transform with periodized biorthogonal filter banks.

Conventions pinned here and relied on everywhere else:

* boundary handling is periodization (circular indexing), so a length-n
  signal always splits into two length-n/2 halves and reconstruction is
  exact;
* analysis is a correlation sampled at even positions,
  ``y[k] = sum_i taps[i] * x[(2k + origin + i) mod n]``;
* synthesis is zero-insertion upsampling followed by circular convolution;
* the high-pass sign convention is fixed by the Haar bank below
  (``analysis_high = [1/sqrt2, -1/sqrt2]``);
* 2D transforms run rows (width axis) first, then columns, one channel at
  a time, with a fixed per-tap accumulation order so results are
  bit-reproducible.

Band naming: ``tr`` is low-pass along width / high-pass along height
(horizontal edges), ``bl`` the transpose of that (vertical edges), ``br``
high-pass in both (diagonal detail).
"""

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

_SQRT2 = float(np.sqrt(2.0))


@dataclass(frozen=True)
class FilterBank:
    """Analysis/synthesis filter quadruple with per-filter support origins.

    ``*_origin`` is the signal offset of a filter's first tap relative to
    the output position (twice the output index for analysis, the
    upsampled position for synthesis).
    """

    name: str
    analysis_low: np.ndarray
    analysis_high: np.ndarray
    synthesis_low: np.ndarray
    synthesis_high: np.ndarray
    analysis_low_origin: int = 0
    analysis_high_origin: int = 0
    synthesis_low_origin: int = 0
    synthesis_high_origin: int = 0

    @property
    def max_length(self) -> int:
        return max(
            len(self.analysis_low),
            len(self.analysis_high),
            len(self.synthesis_low),
            len(self.synthesis_high),
        )


@dataclass(frozen=True)
class QuadDecomposition:
    """The four half-size frequency bands of one 2D transform level."""

    tl: np.ndarray
    tr: np.ndarray
    bl: np.ndarray
    br: np.ndarray

    def bands(self):
        return self.tl, self.tr, self.bl, self.br


SUPPORTED_WAVELETS = ("haar", "bior2.2")


def make_filter_bank(name: str) -> FilterBank:
    """Return the named filter bank.

    "haar" is the orthonormal two-tap bank; "bior2.2" is the 5/3 spline
    biorthogonal bank, scaled so the low-pass DC gain is sqrt(2) like Haar.
    """
    if name == "haar":
        h = 1.0 / _SQRT2
        return FilterBank(
            name="haar",
            analysis_low=np.array([h, h]),
            analysis_high=np.array([h, -h]),
            synthesis_low=np.array([h, h]),
            synthesis_high=np.array([h, -h]),
        )
    if name == "bior2.2":
        return FilterBank(
            name="bior2.2",
            analysis_low=_SQRT2 * np.array([-0.125, 0.25, 0.75, 0.25, -0.125]),
            analysis_high=np.array([-0.5, 1.0, -0.5]) / _SQRT2,
            synthesis_low=np.array([0.5, 1.0, 0.5]) / _SQRT2,
            synthesis_high=_SQRT2 * np.array([-0.125, -0.25, 0.75, -0.25, -0.125]),
            analysis_low_origin=-2,
            analysis_high_origin=0,
            synthesis_low_origin=-1,
            synthesis_high_origin=-1,
        )
    raise ValueError(
        f"unknown wavelet {name!r}; supported: {', '.join(SUPPORTED_WAVELETS)}"
    )


def _analyze_axis(arr, taps, origin, axis):
    """Periodic correlation with ``taps`` sampled at even positions of ``axis``."""
    n = arr.shape[axis]
    keep = [slice(None)] * arr.ndim
    keep[axis] = slice(0, n, 2)
    keep = tuple(keep)
    out = None
    for i, t in enumerate(taps):
        term = t * np.roll(arr, -(origin + i), axis=axis)[keep]
        out = term if out is None else out + term
    return out


def _synthesize_axis(approx, detail, fb: FilterBank, axis):
    """Zero-insert upsample both halves, then circular-convolve and sum."""
    shape = list(approx.shape)
    shape[axis] *= 2
    even = [slice(None)] * approx.ndim
    even[axis] = slice(0, shape[axis], 2)
    even = tuple(even)

    up_a = np.zeros(shape, dtype=np.result_type(approx, detail))
    up_a[even] = approx
    up_d = np.zeros(shape, dtype=up_a.dtype)
    up_d[even] = detail

    out = None
    for i, t in enumerate(fb.synthesis_low):
        term = t * np.roll(up_a, fb.synthesis_low_origin + i, axis=axis)
        out = term if out is None else out + term
    for i, t in enumerate(fb.synthesis_high):
        out = out + t * np.roll(up_d, fb.synthesis_high_origin + i, axis=axis)
    return out


def _check_even(n, what):
    if n % 2 != 0:
        raise GeometryError(f"{what} must be even, got {n}")


def dwt1d(signal, fb: FilterBank, boundary: str = "periodic"):
    """One analysis level: even-length signal -> (approx, detail) halves."""
    if boundary != "periodic":
        raise ValueError(f"unsupported boundary mode {boundary!r}; only 'periodic'")
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise GeometryError(f"dwt1d expects a 1D signal, got shape {x.shape}")
    _check_even(x.shape[0], "signal length")
    if x.shape[0] < fb.max_length:
        raise GeometryError(
            f"signal length {x.shape[0]} shorter than filter length {fb.max_length}"
        )
    approx = _analyze_axis(x, fb.analysis_low, fb.analysis_low_origin, 0)
    detail = _analyze_axis(x, fb.analysis_high, fb.analysis_high_origin, 0)
    return approx, detail


def idwt1d(approx, detail, fb: FilterBank):
    """Exact inverse of :func:`dwt1d` under the same periodic boundary."""
    a = np.asarray(approx, dtype=np.float64)
    d = np.asarray(detail, dtype=np.float64)
    if a.shape != d.shape or a.ndim != 1:
        raise GeometryError(
            f"approx/detail must be equal-length 1D halves, got {a.shape} vs {d.shape}"
        )
    return _synthesize_axis(a, d, fb, 0)


def _as_image(image):
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        return x
    if x.ndim == 3 and x.shape[2] in (1, 3):
        return x
    raise GeometryError(
        f"expected (H, W) or (H, W, C) with C in {{1, 3}}, got shape {x.shape}"
    )


def dwt2d(image, fb: FilterBank) -> QuadDecomposition:
    """Separable 2D analysis: rows (width) first, then columns, per channel."""
    x = _as_image(image)
    h, w = x.shape[0], x.shape[1]
    _check_even(h, "image height")
    _check_even(w, "image width")
    if min(h, w) < fb.max_length:
        raise GeometryError(
            f"image extents {h}x{w} shorter than filter length {fb.max_length}"
        )
    lo_w = _analyze_axis(x, fb.analysis_low, fb.analysis_low_origin, 1)
    hi_w = _analyze_axis(x, fb.analysis_high, fb.analysis_high_origin, 1)
    tl = _analyze_axis(lo_w, fb.analysis_low, fb.analysis_low_origin, 0)
    tr = _analyze_axis(lo_w, fb.analysis_high, fb.analysis_high_origin, 0)
    bl = _analyze_axis(hi_w, fb.analysis_low, fb.analysis_low_origin, 0)
    br = _analyze_axis(hi_w, fb.analysis_high, fb.analysis_high_origin, 0)
    return QuadDecomposition(tl=tl, tr=tr, bl=bl, br=br)


def idwt2d(quad: QuadDecomposition, fb: FilterBank):
    """Exact inverse of :func:`dwt2d`: columns first, then rows."""
    tl, tr, bl, br = quad.bands()
    shapes = {np.shape(b) for b in (tl, tr, bl, br)}
    if len(shapes) != 1:
        raise GeometryError(
            "quad bands must share extents, got "
            + ", ".join(str(np.shape(b)) for b in (tl, tr, bl, br))
        )
    lo_w = _synthesize_axis(np.asarray(tl, dtype=np.float64), np.asarray(tr, dtype=np.float64), fb, 0)
    hi_w = _synthesize_axis(np.asarray(bl, dtype=np.float64), np.asarray(br, dtype=np.float64), fb, 0)
    return _synthesize_axis(lo_w, hi_w, fb, 1)


def lowpass_reconstruction(tl, fb: FilterBank):
    """Deterministic reconstruction with the three detail bands zeroed."""
    z = np.zeros_like(np.asarray(tl, dtype=np.float64))
    return idwt2d(QuadDecomposition(tl=tl, tr=z, bl=z, br=z), fb)

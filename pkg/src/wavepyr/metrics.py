"""Reconstruction and distributional quality metrics.

The distributional metric is the Fréchet distance between Gaussian moment
summaries of feature sets. Features come from a fixed deterministic map
(8x8 downsampled pixels, or a seeded random projection of the flattened
image), so scores are reproducible bit-for-bit; they are not comparable
to published scores computed on classifier embeddings.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .pixel import _resample_axis

FEATURE_METHODS = ("pixel_moments", "seeded_random_projection")


def mse(a, b):
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"extent mismatch: {x.shape} vs {y.shape}")
    return float(((x - y) ** 2).mean())


def psnr(a, b, peak=1.0):
    """10*log10(peak^2 / mse); identical inputs report math.inf.

    Split into two log terms so that at peak 1 the value is exactly
    -10*log10(mse).
    """
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak) - 10.0 * math.log10(err)


@dataclass(frozen=True)
class FeatureSpec:
    """Deterministic feature map: method, output dimension, fixed seed."""

    method: str = "pixel_moments"
    dim: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.method not in FEATURE_METHODS:
            raise ValueError(
                f"unknown feature method {self.method!r}; supported: {', '.join(FEATURE_METHODS)}"
            )
        if self.dim < 2:
            raise ValueError(f"feature dimension must be >= 2, got {self.dim}")


@dataclass
class FeatureStats:
    """Empirical mean and covariance of one feature set."""

    mean: np.ndarray
    covariance: np.ndarray  # (d,) diagonal or (d, d) full
    count: int

    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def diagonal(self):
        return self.covariance.ndim == 1


def _feature_matrix(images, spec: FeatureSpec):
    feats = []
    proj = None
    for img in images:
        x = np.asarray(img, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, :, None]
        if spec.method == "pixel_moments":
            small = _resample_axis(_resample_axis(x, 8, 0), 8, 1)
            feats.append(small.reshape(-1))
        else:
            flat = x.reshape(-1)
            if proj is None:
                rng = np.random.default_rng(spec.seed)
                proj = rng.standard_normal((spec.dim, flat.size)) / np.sqrt(flat.size)
            elif proj.shape[1] != flat.size:
                raise ValueError("images in one feature set must share extents")
            feats.append(proj @ flat)
    # pixel_moments dimensionality is 64 * channels, fixed by the data; the
    # spec's dim field only drives the projection method.
    return np.stack(feats)


def extract_features(images, spec: FeatureSpec, full_covariance=False) -> FeatureStats:
    """Deterministic per-image features, summarized as mean and covariance."""
    images = list(images)
    if len(images) < 2:
        raise ValueError(f"need at least 2 images to estimate moments, got {len(images)}")
    mat = _feature_matrix(images, spec)
    mu = mat.mean(axis=0)
    centered = mat - mu
    if full_covariance:
        cov = centered.T @ centered / mat.shape[0]
    else:
        cov = (centered**2).mean(axis=0)
    return FeatureStats(mean=mu, covariance=cov, count=mat.shape[0])


def _sqrtm_psd(m):
    vals, vecs = np.linalg.eigh(m)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: FeatureStats, b: FeatureStats):
    """||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)), never negative."""
    if a.dim != b.dim:
        raise ValueError(f"feature dimension mismatch: {a.dim} vs {b.dim}")
    mean_term = float(((a.mean - b.mean) ** 2).sum())
    if a.diagonal and b.diagonal:
        va, vb = a.covariance, b.covariance
        trace_term = float((va + vb - 2.0 * np.sqrt(va * vb)).sum())
    else:
        sa = np.diag(a.covariance) if a.diagonal else a.covariance
        sb = np.diag(b.covariance) if b.diagonal else b.covariance
        root_a = _sqrtm_psd(sa)
        cross = _sqrtm_psd(root_a @ sb @ root_a)
        trace_term = float(np.trace(sa) + np.trace(sb) - 2.0 * np.trace(cross))
    return max(mean_term + trace_term, 0.0)


def eval_report(real_set, generated_set, reconstruction_set, spec: FeatureSpec,
                full_covariance=False):
    """Fréchet distances of generated vs real and vs reconstructions, plus
    mean reconstruction MSE/PSNR against the paired originals."""
    real = list(real_set)
    gen = list(generated_set)
    rec = list(reconstruction_set)
    if not real or not gen or not rec:
        raise ValueError("all three image sets must be non-empty")
    if len(rec) != len(real):
        raise ValueError(
            f"reconstructions must pair with originals, got {len(rec)} vs {len(real)}"
        )
    stats_real = extract_features(real, spec, full_covariance)
    stats_gen = extract_features(gen, spec, full_covariance)
    stats_rec = extract_features(rec, spec, full_covariance)

    rec_mse = [mse(r, o) for r, o in zip(rec, real)]
    rec_psnr = [psnr(r, o) for r, o in zip(rec, real)]

    def row(metric, value, set_a, set_b, n_a, n_b):
        return {
            "metric": metric,
            "value": value,
            "set_a": set_a,
            "set_b": set_b,
            "n_a": n_a,
            "n_b": n_b,
            "feature_method": spec.method,
            "feature_dim": stats_real.dim,
            "seed": spec.seed,
        }

    return [
        row("frechet_distance", frechet_distance(stats_gen, stats_real),
            "generated", "real", len(gen), len(real)),
        row("frechet_distance", frechet_distance(stats_gen, stats_rec),
            "generated", "reconstructions", len(gen), len(rec)),
        row("mean_mse", float(np.mean(rec_mse)), "reconstructions", "real", len(rec), len(real)),
        row("mean_psnr", float(np.mean(rec_psnr)), "reconstructions", "real", len(rec), len(real)),
    ]


REPORT_COLUMNS = ("metric", "value", "set_a", "set_b", "n_a", "n_b",
                  "feature_method", "feature_dim", "seed")


def write_report_csv(rows, path_or_buf):
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            if isinstance(out["value"], float):
                out["value"] = f"{out['value']:.10g}"
            writer.writerow(out)
    finally:
        if own:
            fh.close()

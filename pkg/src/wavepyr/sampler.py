"""Class-conditional sampling in the retained-band latent space.

The prior is a per-class diagonal Gaussian fitted by moment matching on
encoded training images. The truncation knob scales the noise standard
deviation by t in (0, 1], trading diversity for closeness to the class
mean; t = 1 reproduces the fitted moments, small t collapses to the mean.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    ContainerError,
    TruncatedPayloadError,
    VersionMismatchError,
)


@dataclass(frozen=True)
class TruncationLevel:
    t: float

    def __post_init__(self):
        if not (0.0 < self.t <= 1.0):
            raise ValueError(f"truncation level must lie in (0, 1], got {self.t}")


@dataclass
class SamplerModel:
    """Per-class mean/variance over flattened latent values."""

    means: np.ndarray  # (K, d)
    variances: np.ndarray  # (K, d)
    latent_shape: tuple  # (H, W, C)

    @property
    def class_count(self):
        return self.means.shape[0]

    def __post_init__(self):
        if self.means.shape != self.variances.shape:
            raise ValueError("mean and variance tables must have equal shapes")
        if np.any(self.variances < 0):
            raise ValueError("variances must be non-negative")
        d = int(np.prod(self.latent_shape))
        if self.means.shape[1] != d:
            raise ValueError(
                f"latent shape {self.latent_shape} implies {d} values per class, "
                f"table holds {self.means.shape[1]}"
            )


def fit_sampler(tl_dataset, labels) -> SamplerModel:
    """Per-class empirical mean and (population) variance of the latents."""
    data = np.asarray(tl_dataset, dtype=np.float64)
    labels = np.asarray(labels)
    if data.ndim != 4:
        raise ValueError(f"expected a (N, H, W, C) latent stack, got shape {data.shape}")
    if labels.shape != (data.shape[0],):
        raise ValueError("labels must be one integer per example")
    k = int(labels.max()) + 1 if labels.size else 0
    flat = data.reshape(data.shape[0], -1)
    means = np.empty((k, flat.shape[1]))
    variances = np.empty_like(means)
    for c in range(k):
        rows = flat[labels == c]
        if rows.shape[0] < 2:
            raise ValueError(f"class {c} has {rows.shape[0]} examples, need at least 2")
        mu = rows.mean(axis=0)
        means[c] = mu
        variances[c] = ((rows - mu) ** 2).mean(axis=0)
    return SamplerModel(means=means, variances=variances, latent_shape=data.shape[1:])


def _truncation_value(t):
    if isinstance(t, TruncationLevel):
        return t.t
    return TruncationLevel(float(t)).t


def sample(model: SamplerModel, class_index, t, n, seed):
    """Draw n latents for one class: mu + (t * sigma) * standard normal noise."""
    if not (0 <= class_index < model.class_count):
        raise ValueError(f"unknown class {class_index}, model holds {model.class_count}")
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    tval = _truncation_value(t)
    rng = np.random.default_rng(seed)
    sigma = np.sqrt(model.variances[class_index])
    eps = rng.standard_normal((n, sigma.size))
    z = model.means[class_index] + (tval * sigma) * eps
    return [row.reshape(model.latent_shape) for row in z]


def empirical_sample(tl_dataset, labels, class_index, n, seed):
    """Uniform draws with replacement from the stored latents of one class."""
    data = np.asarray(tl_dataset, dtype=np.float64)
    labels = np.asarray(labels)
    idx = np.flatnonzero(labels == class_index)
    if idx.size == 0:
        raise ValueError(f"unknown class {class_index}: no examples carry that label")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, idx.size, size=n)
    return [data[idx[p]].copy() for p in picks]


# ---------------------------------------------------------------------------
# Prior container
# ---------------------------------------------------------------------------

PRIOR_MAGIC = b"NSBP"
PRIOR_VERSION = 1


def serialize_sampler(model: SamplerModel) -> bytes:
    h, w, c = model.latent_shape
    head = struct.pack("<4sHHIIB", PRIOR_MAGIC, PRIOR_VERSION, model.class_count, h, w, c)
    chunks = [head]
    for cls in range(model.class_count):
        chunks.append(np.ascontiguousarray(model.means[cls], dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(model.variances[cls], dtype="<f4").tobytes())
    return b"".join(chunks)


def deserialize_sampler(data: bytes) -> SamplerModel:
    if len(data) < 4 or data[:4] != PRIOR_MAGIC:
        raise BadMagicError("prior container does not start with the NSBP magic")
    if len(data) < 17:
        raise TruncatedPayloadError("prior container truncated inside the header")
    version, count, h, w, c = struct.unpack_from("<HHIIB", data, 4)
    if version != PRIOR_VERSION:
        raise VersionMismatchError(
            f"prior container version {version}, this build reads {PRIOR_VERSION}"
        )
    d = h * w * c
    expected = 17 + count * d * 8
    if len(data) < expected:
        raise TruncatedPayloadError(
            f"prior container holds {len(data) - 17} payload bytes, expected {count * d * 8}"
        )
    if len(data) > expected:
        raise ContainerError(f"prior container has {len(data) - expected} trailing bytes")
    means = np.empty((count, d))
    variances = np.empty((count, d))
    pos = 17
    for cls in range(count):
        means[cls] = np.frombuffer(data, dtype="<f4", count=d, offset=pos)
        pos += 4 * d
        variances[cls] = np.frombuffer(data, dtype="<f4", count=d, offset=pos)
        pos += 4 * d
    return SamplerModel(means=means, variances=variances, latent_shape=(h, w, c))


def save_sampler(path, model):
    with open(path, "wb") as fh:
        fh.write(serialize_sampler(model))


def load_sampler(path):
    with open(path, "rb") as fh:
        return deserialize_sampler(fh.read())

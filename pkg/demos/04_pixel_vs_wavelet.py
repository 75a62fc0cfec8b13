"""
Pixel-space baseline vs the wavelet path
========================================

Both encoders produce a small image-like latent. The pixel path subsamples
with bilinear interpolation and must repair the loss at full resolution;
the wavelet path discards detail bands that its decoder predicts as small
patches. The comparison report records which deterministic reconstruction
preserves more.
"""

import numpy as np

from wavepyr.corpus import _BUILDERS, TOY_CLASSES
from wavepyr.pixel import (
    bilinear_downsample,
    bilinear_upsample,
    compare_information_content,
    pixel_decode_level,
)
from wavepyr.recon import TrainConfig, train_pixel_refiner
from wavepyr.wavelet import make_filter_bank

rng = np.random.default_rng(3)
fb = make_filter_bank("bior2.2")

images = [np.clip(_BUILDERS[name](64, rng), 0, 1) for name in TOY_CLASSES for _ in range(4)]
rows, summary = compare_information_content(images, 1, fb)
print(f"deterministic reconstruction MSE over {len(rows)} images: "
      f"wavelet {summary['wavelet_mse']:.5f} vs pixel {summary['pixel_mse']:.5f}")

# the pixel refiner learns the residual the interpolation cannot recover
lows = np.stack([bilinear_downsample(im, 2) for im in images])
targets = np.stack(images)
model, _ = train_pixel_refiner(
    lows, targets, TrainConfig(learning_rate=1e-3, batch_size=8, iterations=300, seed=0)
)
plain = np.mean([((bilinear_upsample(lo, 2) - tg) ** 2).mean() for lo, tg in zip(lows, targets)])
refined = np.mean([((pixel_decode_level(lo, model) - tg) ** 2).mean() for lo, tg in zip(lows, targets)])
print(f"pixel decode MSE: plain upsample {plain:.5f} -> with refiner {refined:.5f}")
print("note the refiner operates at the full 64x64 target extent,")
print("while the wavelet decoder's heads only ever emit base patches")

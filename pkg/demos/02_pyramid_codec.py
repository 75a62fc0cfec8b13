"""
Recursive pyramid encoding and the three decoding regimes
=========================================================

The encoder keeps only the low band at each level, compressing by exactly
4^L. Decoding needs the missing detail; this script compares three patch
sources: the true patches (exact), all-zero patches (blurry low-pass
baseline), and a freshly trained model (in between, learned).
"""

import numpy as np

from wavepyr.corpus import _BUILDERS
from wavepyr.pyramid import (
    OraclePatchSource,
    ZeroPatchSource,
    decode,
    encode,
    full_decompose,
    serialize_code,
)
from wavepyr.recon import TrainConfig, datasets_from_images, train_decoder
from wavepyr.wavelet import make_filter_bank

rng = np.random.default_rng(1)
fb = make_filter_bank("bior2.2")
images = [np.clip(_BUILDERS["01_vstripes"](64, rng), 0, 1) for _ in range(24)]
target = images[0]

code = encode(target, 1, fb)
print(f"encoded 64x64x3 -> latent {code.tl.shape}, "
      f"{len(serialize_code(code))} bytes on disk, ratio {target.size // code.tl.size}x")

# exact: oracle patches reduce decoding to the inverse transform
oracle = [OraclePatchSource(q, 32, fb) for q in full_decompose(target, 1, fb)]
err_oracle = ((decode(code, oracle, fb) - target) ** 2).mean()

# baseline: zero detail = deterministic low-pass upsampling
zero = [ZeroPatchSource(32, 3, 32)]
err_zero = ((decode(code, zero, fb) - target) ** 2).mean()

# learned: a small decoder trained on more images of the same class
ds = datasets_from_images(images[1:], 1, fb)[0]
model, history = train_decoder(
    ds, TrainConfig(learning_rate=1e-3, batch_size=8, iterations=300, seed=0)
)
err_model = ((decode(code, [model], fb) - target) ** 2).mean()

print(f"decode MSE: oracle {err_oracle:.2e}   zero {err_zero:.5f}   "
      f"trained {err_model:.5f}")
print(f"training loss went {history[0]['train_mse']:.5f} -> {history[-1]['train_mse']:.5f} "
      f"over {len(history)} iterations")

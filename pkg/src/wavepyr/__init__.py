"""Wavelet-pyramid image codec with learned detail reconstruction.

Submodules:

* ``wavelet`` -- 1D/2D transforms and filter banks
* ``pyramid`` -- recursive low-band encoder/decoder and latent containers
* ``autodiff`` -- minimal reverse-mode tensor engine with Adam
* ``recon`` -- UNet-with-heads reconstructors and training
* ``sampler`` -- class-conditional truncated prior sampling
* ``pixel`` -- interpolation baseline with residual refiner
* ``metrics`` -- MSE/PSNR and Fréchet-distance evaluation
* ``corpus`` / ``ppm`` -- toy corpus generation and image I/O
* ``cli`` -- the batch command-line frontend

Submodules import lazily so the CLI can pin thread counts before numpy
loads.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "autodiff",
    "cli",
    "corpus",
    "errors",
    "metrics",
    "pixel",
    "ppm",
    "pyramid",
    "recon",
    "sampler",
    "wavelet",
)


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")

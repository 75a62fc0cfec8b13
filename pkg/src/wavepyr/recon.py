"""UNet-with-heads detail reconstructors and their MSE training loop.

One DecoderModel per pyramid level: a shared convolutional trunk with two
downsample stages, skip connections pasted back in by channel concat, and
3*k shallow heads, each predicting one base patch of one missing band
(k = (band_extent / base_size)^2). Heads are ordered band-major
(tr, bl, br), patches within a band in the codec's depth-first order.

The pixel-space refiner reuses the same trunk but emits a single residual
image at full extent instead of per-patch heads.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import GeometryError, GeometryMismatchError, TrainingDivergedError
from .pyramid import PatchGrid, slice_to_base_patches
from .wavelet import make_filter_bank

LEAK = 0.2


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    iterations: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    val_interval: int = 100

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "iterations", "epsilon", "val_interval"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass
class LevelDataset:
    """Per-example band tuples (tl, tr, bl, br) of one pyramid level.

    Arrays are stacked (N, S, S, C) in image layout.
    """

    level: int
    wavelet_name: str
    tl: np.ndarray
    tr: np.ndarray
    bl: np.ndarray
    br: np.ndarray

    def __post_init__(self):
        shapes = {a.shape for a in (self.tl, self.tr, self.bl, self.br)}
        if len(shapes) != 1:
            raise GeometryError(f"level dataset bands disagree on shape: {shapes}")

    def __len__(self):
        return self.tl.shape[0]

    @property
    def band_extent(self):
        return self.tl.shape[1]

    @property
    def channels(self):
        return self.tl.shape[3]

    def subset(self, idx):
        return LevelDataset(
            self.level, self.wavelet_name, self.tl[idx], self.tr[idx], self.bl[idx], self.br[idx]
        )


def datasets_from_images(images, levels, fb):
    """Decompose a list of images into one LevelDataset per level."""
    from .pyramid import full_decompose

    per_level = [([], [], [], []) for _ in range(levels)]
    for img in images:
        for lvl, quad in enumerate(full_decompose(img, levels, fb)):
            for store, band in zip(per_level[lvl], quad.bands()):
                store.append(band)
    return [
        LevelDataset(lvl + 1, fb.name, *(np.stack(b) for b in bands))
        for lvl, bands in enumerate(per_level)
    ]


def _images_to_nchw(batch, dtype):
    return np.ascontiguousarray(np.transpose(np.asarray(batch), (0, 3, 1, 2)), dtype=dtype)


def _conv_param(rng, cout, cin, k, dtype):
    bound = 1.0 / np.sqrt(cin * k * k)
    w = rng.uniform(-bound, bound, size=(cout, cin, k, k)).astype(dtype)
    b = np.zeros(cout, dtype=dtype)
    return ad.Tensor(w, requires_grad=True), ad.Tensor(b, requires_grad=True)


class _TrunkMixin:
    """Shared 8-conv UNet trunk: two downsamples, skips via channel concat."""

    def _build_trunk(self, rng, cin, f, k, dtype):
        spec = [
            ("enc1a", f, cin),
            ("enc1b", f, f),
            ("enc2a", 2 * f, f),
            ("enc2b", 2 * f, 2 * f),
            ("mid", 2 * f, 2 * f),
            ("dec2", 2 * f, 4 * f),
            ("dec1", f, 3 * f),
            ("out", f, f),
        ]
        for name, cout, cin_ in spec:
            w, b = _conv_param(rng, cout, cin_, k, dtype)
            self.params[f"trunk.{name}.w"] = w
            self.params[f"trunk.{name}.b"] = b

    def _trunk_forward(self, x):
        p = self.params

        def block(t, name):
            return ad.leaky_relu(ad.conv2d(t, p[f"trunk.{name}.w"], p[f"trunk.{name}.b"]), LEAK)

        t1 = block(block(x, "enc1a"), "enc1b")
        t2 = block(block(ad.stride2_downsample(t1), "enc2a"), "enc2b")
        m = block(ad.stride2_downsample(t2), "mid")
        d2 = block(ad.concat_channels([ad.nearest_upsample2x(m), t2]), "dec2")
        d1 = block(ad.concat_channels([ad.nearest_upsample2x(d2), t1]), "dec1")
        return block(d1, "out")


class DecoderModel(_TrunkMixin):
    """Level decoder: trunk + 3*k shallow heads, one per missing base patch."""

    def __init__(self, level, band_extent, base_size, channels, seed, base_channels=8, dtype=np.float32):
        if band_extent < base_size:
            raise GeometryError(
                f"band extent {band_extent} smaller than base patch size {base_size}"
            )
        if band_extent % 4 != 0:
            raise GeometryError(f"band extent {band_extent} must be divisible by 4")
        ratio = band_extent // base_size
        if ratio * base_size != band_extent or ratio & (ratio - 1):
            raise GeometryError(
                f"band extent {band_extent} is not a power-of-two multiple of {base_size}"
            )
        self.level = level
        self.band_extent = band_extent
        self.base_size = base_size
        self.channels = channels
        self.base_channels = base_channels
        self.patches_per_band = ratio * ratio
        self.head_count = 3 * self.patches_per_band
        self.head_stages = int(np.log2(ratio))
        self.dtype = np.dtype(dtype)
        self.params = {}

        rng = np.random.default_rng(seed)
        f = base_channels
        self._build_trunk(rng, channels, f, 3, self.dtype)
        for h in range(self.head_count):
            w, b = _conv_param(rng, f, f, 3, self.dtype)
            self.params[f"head.{h:02d}.c0.w"] = w
            self.params[f"head.{h:02d}.c0.b"] = b
            for s in range(self.head_stages):
                w, b = _conv_param(rng, f, f, 3, self.dtype)
                self.params[f"head.{h:02d}.d{s}.w"] = w
                self.params[f"head.{h:02d}.d{s}.b"] = b
            w, b = _conv_param(rng, channels, f, 3, self.dtype)
            self.params[f"head.{h:02d}.out.w"] = w
            self.params[f"head.{h:02d}.out.b"] = b

    def parameters(self):
        return list(self.params.values())

    def forward(self, x):
        """x: (B, C, S, S) Tensor -> list of 3*k head outputs, each (B, C, P, P)."""
        if x.shape[1] != self.channels or x.shape[2] != self.band_extent or x.shape[3] != self.band_extent:
            raise GeometryError(
                f"input shape {x.shape} does not match model geometry "
                f"(C={self.channels}, S={self.band_extent})"
            )
        feat = self._trunk_forward(x)
        p = self.params
        outs = []
        for h in range(self.head_count):
            t = ad.leaky_relu(ad.conv2d(feat, p[f"head.{h:02d}.c0.w"], p[f"head.{h:02d}.c0.b"]), LEAK)
            for s in range(self.head_stages):
                t = ad.leaky_relu(
                    ad.conv2d(ad.stride2_downsample(t), p[f"head.{h:02d}.d{s}.w"], p[f"head.{h:02d}.d{s}.b"]),
                    LEAK,
                )
            outs.append(ad.conv2d(t, p[f"head.{h:02d}.out.w"], p[f"head.{h:02d}.out.b"]))
        return outs

    def predict_patch_grids(self, tl_image):
        """Single-image inference in codec layout: (S, S, C) -> three PatchGrids."""
        (grids,) = predict_patches(self, np.asarray(tl_image)[None])
        return grids


def build_decoder_model(level, band_extent, base_size, channels, seed, base_channels=8, dtype=np.float32):
    return DecoderModel(level, band_extent, base_size, channels, seed, base_channels, dtype)


def predict_patches(model, tl_batch):
    """Run the model on a batch of TL images (B, S, S, C).

    Returns, per example, a (tr, bl, br) triple of PatchGrids in the
    pinned band-major head order.
    """
    batch = np.asarray(tl_batch)
    if batch.ndim != 4:
        raise GeometryError(f"expected a (B, S, S, C) batch, got shape {batch.shape}")
    x = ad.Tensor(_images_to_nchw(batch, model.dtype))
    outs = model.forward(x)
    k = model.patches_per_band
    ratio = model.band_extent // model.base_size
    results = []
    for n in range(batch.shape[0]):
        grids = []
        for band in range(3):
            patches = [
                np.transpose(outs[band * k + i].data[n], (1, 2, 0)).astype(np.float64)
                for i in range(k)
            ]
            grids.append(
                PatchGrid(patches=patches, grid_rows=ratio, grid_cols=ratio, base_size=model.base_size)
            )
        results.append(tuple(grids))
    return results


class PixelRefiner(_TrunkMixin):
    """Residual refiner for the pixel baseline: trunk + one full-extent conv."""

    def __init__(self, level, input_extent, channels, seed, base_channels=8, dtype=np.float32):
        if input_extent % 4 != 0:
            raise GeometryError(f"input extent {input_extent} must be divisible by 4")
        self.level = level
        self.input_extent = input_extent
        self.channels = channels
        self.base_channels = base_channels
        self.dtype = np.dtype(dtype)
        self.params = {}
        rng = np.random.default_rng(seed)
        self._build_trunk(rng, channels, base_channels, 3, self.dtype)
        w, b = _conv_param(rng, channels, base_channels, 3, self.dtype)
        self.params["residual.w"] = w
        self.params["residual.b"] = b

    def parameters(self):
        return list(self.params.values())

    def forward(self, x):
        if x.shape[1] != self.channels or x.shape[2] != self.input_extent or x.shape[3] != self.input_extent:
            raise GeometryError(
                f"input shape {x.shape} does not match refiner geometry "
                f"(C={self.channels}, S={self.input_extent})"
            )
        feat = self._trunk_forward(x)
        return ad.conv2d(feat, self.params["residual.w"], self.params["residual.b"])

    def predict_residual(self, image):
        """(S, S, C) image -> (S, S, C) residual, in codec layout."""
        x = ad.Tensor(_images_to_nchw(np.asarray(image)[None], self.dtype))
        out = self.forward(x)
        return np.transpose(out.data[0], (1, 2, 0)).astype(np.float64)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _decoder_targets(dataset: LevelDataset, base_size, fb, dtype):
    """Stack sliced base patches band-major into (N, 3k, C, P, P)."""
    rows = []
    for n in range(len(dataset)):
        patches = []
        for band in (dataset.tr, dataset.bl, dataset.br):
            grid = slice_to_base_patches(band[n], base_size, fb)
            patches.extend(np.transpose(p, (2, 0, 1)) for p in grid.patches)
        rows.append(np.stack(patches))
    return np.ascontiguousarray(np.stack(rows), dtype=dtype)


def _batched_loss(model, x_nchw, targets_flat):
    xb = ad.Tensor(x_nchw)
    outs = model.forward(xb)
    pred = ad.concat_channels(outs) if isinstance(outs, list) else outs
    return ad.mse_loss(pred, ad.Tensor(targets_flat))


def _eval_mse(model, x_nchw, targets_flat, batch_size):
    total, count = 0.0, 0
    for lo in range(0, x_nchw.shape[0], batch_size):
        hi = min(lo + batch_size, x_nchw.shape[0])
        loss = _batched_loss(model, x_nchw[lo:hi], targets_flat[lo:hi])
        total += float(loss.data) * (hi - lo)
        count += hi - lo
    return total / count


def model_checkpoint_entries(model):
    meta = np.array(
        [
            model.level,
            getattr(model, "band_extent", getattr(model, "input_extent", 0)),
            getattr(model, "base_size", 0),
            model.channels,
            model.base_channels,
        ],
        dtype=np.float32,
    )
    return [("meta", meta)] + [(name, t.data) for name, t in model.params.items()]


def save_model(model, path):
    ad.save_checkpoint(path, model_checkpoint_entries(model))


def _restore_params(model, entries):
    named = dict(entries)
    for name, t in model.params.items():
        if name not in named:
            raise GeometryMismatchError(f"checkpoint is missing parameter {name!r}")
        if named[name].shape != t.data.shape:
            raise GeometryMismatchError(
                f"checkpoint parameter {name!r} has shape {named[name].shape}, "
                f"model expects {t.data.shape}"
            )
        t.data = named[name].astype(model.dtype)


def load_model(path, expected_level=None, kind="decoder", dtype=np.float32):
    """Rebuild a model from a checkpoint, validating level and geometry."""
    entries = ad.load_checkpoint(path)
    if not entries or entries[0][0] != "meta":
        raise GeometryMismatchError("checkpoint does not carry model metadata")
    level, extent, base_size, channels, base_channels = (int(v) for v in entries[0][1])
    if expected_level is not None and level != expected_level:
        raise GeometryMismatchError(
            f"checkpoint holds a level-{level} model, expected level {expected_level}"
        )
    if kind == "decoder":
        model = DecoderModel(level, extent, base_size, channels, seed=0,
                             base_channels=base_channels, dtype=dtype)
    elif kind == "pixel":
        model = PixelRefiner(level, extent, channels, seed=0,
                             base_channels=base_channels, dtype=dtype)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    _restore_params(model, entries[1:])
    return model


def train_decoder(dataset, config, val_dataset=None, model=None, base_channels=8, fb=None):
    """Minimize MSE between predicted and true base patches with Adam.

    Returns (model, history); history rows are dicts with iteration,
    train_mse and, when a validation split is supplied, periodic val_mse.
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    if fb is None:
        fb = make_filter_bank(dataset.wavelet_name)
    if model is None:
        model = DecoderModel(
            level=dataset.level,
            band_extent=dataset.band_extent,
            base_size=min(32, dataset.band_extent),
            channels=dataset.channels,
            seed=config.seed,
            base_channels=base_channels,
        )

    dtype = model.dtype
    x = _images_to_nchw(dataset.tl, dtype)
    t = _decoder_targets(dataset, model.base_size, fb, dtype)
    t_flat = t.reshape(t.shape[0], -1, model.base_size, model.base_size)
    val = None
    if val_dataset is not None and len(val_dataset):
        vx = _images_to_nchw(val_dataset.tl, dtype)
        vt = _decoder_targets(val_dataset, model.base_size, fb, dtype)
        val = (vx, vt.reshape(vt.shape[0], -1, model.base_size, model.base_size))

    return _run_training(model, x, t_flat, config, val)


def train_pixel_refiner(low_res, targets, config, model=None, level=1, base_channels=8):
    """Train the pixel-path refiner to predict the residual left by upsampling.

    ``low_res`` and ``targets`` are (N, S, S, C) / (N, 2S, 2S, C) stacks;
    the refiner input is the bilinear upsample of each low image.
    """
    from .pixel import bilinear_upsample

    if len(low_res) == 0:
        raise ValueError("training dataset is empty")
    ups = np.stack([bilinear_upsample(im, 2) for im in np.asarray(low_res)])
    if model is None:
        model = PixelRefiner(
            level=level,
            input_extent=ups.shape[1],
            channels=ups.shape[3],
            seed=config.seed,
            base_channels=base_channels,
        )
    dtype = model.dtype
    x = _images_to_nchw(ups, dtype)
    residual = np.asarray(targets) - ups
    t = np.ascontiguousarray(np.transpose(residual, (0, 3, 1, 2)), dtype=dtype)
    return _run_training(model, x, t, config, None)


def _run_training(model, x, targets, config, val):
    params = model.parameters()
    state = ad.AdamState(
        params,
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.epsilon,
    )
    rng = np.random.default_rng(config.seed)
    n = x.shape[0]
    order = rng.permutation(n)
    cursor = 0
    history = []
    last_finite = model_checkpoint_entries(model)

    def forward_batch(idx):
        return _batched_loss(model, x[idx], targets[idx])

    for it in range(config.iterations):
        if cursor + config.batch_size > n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor : cursor + min(config.batch_size, n)]
        cursor += config.batch_size

        loss = forward_batch(idx)
        train_mse = float(loss.data)
        if not np.isfinite(train_mse):
            raise TrainingDivergedError(it, ad.write_checkpoint(last_finite))
        last_finite = model_checkpoint_entries(model)

        ad.zero_grad(params)
        ad.backward(loss)
        adam_grads_finite = all(np.all(np.isfinite(p.grad)) for p in params)
        if not adam_grads_finite:
            raise TrainingDivergedError(it, ad.write_checkpoint(last_finite))
        ad.adam_step(params, state)

        row = {"iteration": it, "train_mse": train_mse, "val_mse": None}
        if val is not None and (it % config.val_interval == 0 or it == config.iterations - 1):
            row["val_mse"] = _eval_mse(model, val[0], val[1], config.batch_size)
        history.append(row)
    return model, history


def write_loss_history(history, path_or_buf):
    """Emit history as CSV: iteration, train_mse, optional val_mse."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "train_mse", "val_mse"])
        for row in history:
            val = "" if row.get("val_mse") is None else f"{row['val_mse']:.10g}"
            writer.writerow([row["iteration"], f"{row['train_mse']:.10g}", val])
    finally:
        if own:
            fh.close()


def history_to_csv(history):
    buf = io.StringIO()
    write_loss_history(history, buf)
    return buf.getvalue()

"""Acceptance suite: one pass/fail line per criterion (run with -s to see them).

Quantitative thresholds for the training criteria were fixed once from a
seeded baseline run and are frozen here; everything else asserts the
analytic or property-based bounds directly.
"""

import time

import numpy as np
import pytest

from wavepyr import autodiff as ad
from wavepyr.corpus import load_corpus, split_indices
from wavepyr.errors import BadMagicError, TruncatedPayloadError
from wavepyr.metrics import FeatureStats, frechet_distance, mse, psnr
from wavepyr.pixel import (
    bilinear_upsample,
    compare_information_content,
    pixel_decode_level,
)
from wavepyr.pyramid import (
    OraclePatchSource,
    ZeroPatchSource,
    decode,
    decode_level,
    deserialize_code,
    encode,
    full_decompose,
    recompose,
    serialize_code,
)
from wavepyr.recon import (
    DecoderModel,
    PixelRefiner,
    TrainConfig,
    build_decoder_model,
    datasets_from_images,
    train_decoder,
    _decoder_targets,
    _eval_mse,
    _images_to_nchw,
)
from wavepyr.sampler import (
    deserialize_sampler,
    fit_sampler,
    sample,
    serialize_sampler,
)
from wavepyr.wavelet import dwt2d, idwt2d, make_filter_bank

FB = make_filter_bank("bior2.2")

# Frozen from the seeded baseline run (level-1 decoder, toy corpus, 64x64):
# zero-prediction patch MSE is ~0.011, the trained model reaches well below
# the criterion's 0.01 bound within the first few hundred iterations.
TRAIN_CONFIG = TrainConfig(learning_rate=1e-3, batch_size=16, iterations=800,
                           seed=0, val_interval=200)
FROZEN_TRAIN_MSE_BOUND = 0.01


def _verdict(num, name, ok, detail=""):
    suffix = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'}{suffix}")
    assert ok, f"criterion {num} ({name}): {detail}"


@pytest.fixture(scope="module")
def level1_run(toy_corpus_dir):
    """Shared seeded training run for the two training criteria."""
    corpus = load_corpus(toy_corpus_dir)
    train_idx, val_idx = split_indices(corpus.labels, seed=0)
    ds = datasets_from_images(list(corpus.images), 1, FB)[0]
    train_ds, val_ds = ds.subset(train_idx), ds.subset(val_idx)
    t0 = time.time()
    model, history = train_decoder(train_ds, TRAIN_CONFIG, val_dataset=val_ds)
    elapsed = time.time() - t0
    return {
        "corpus": corpus,
        "val_idx": val_idx,
        "train_ds": train_ds,
        "val_ds": val_ds,
        "model": model,
        "history": history,
        "elapsed": elapsed,
    }


def _full_mse(model, dataset):
    x = _images_to_nchw(dataset.tl, model.dtype)
    t = _decoder_targets(dataset, model.base_size, FB, model.dtype)
    return _eval_mse(model, x, t.reshape(t.shape[0], -1, model.base_size, model.base_size), 16)


def test_criterion_1_perfect_reconstruction(rng):
    t0 = time.time()
    worst = 0.0
    for i in range(100):
        h = 2 * int(rng.integers(16, 129))
        w = 2 * int(rng.integers(16, 129))
        c = 1 if i % 2 else 3
        x = rng.random((h, w, c))
        for name in ("haar", "bior2.2"):
            fb = make_filter_bank(name)
            worst = max(worst, np.abs(idwt2d(dwt2d(x, fb), fb) - x).max())
    elapsed = time.time() - t0
    _verdict(1, "perfect reconstruction", worst < 1e-8 and elapsed < 10.0,
             f"worst {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_lossless_composition(rng):
    worst_recompose = 0.0
    for levels in (1, 2, 3):
        for size in (64, 96):
            x = rng.random((size, size, 3))
            quads = full_decompose(x, levels, FB)
            worst_recompose = max(worst_recompose, np.abs(recompose(quads, FB) - x).max())
    worst_oracle = 0.0
    for size, levels, base in ((64, 2, 16), (128, 2, 32)):
        x = rng.random((size, size, 3))
        code = encode(x, levels, FB)
        models = [OraclePatchSource(q, base, FB) for q in full_decompose(x, levels, FB)]
        worst_oracle = max(worst_oracle, np.abs(decode(code, models, FB) - x).max())
    ok = worst_recompose < 1e-8 and worst_oracle < 1e-5
    _verdict(2, "lossless pipeline composition", ok,
             f"recompose {worst_recompose:.2e}, oracle decode {worst_oracle:.2e}")


def test_criterion_3_latent_geometry(rng):
    code = encode(rng.random((256, 256, 3)), 2, FB)
    shape_ok = code.tl.shape == (64, 64, 3)
    ratio_ok = (256 * 256 * 3) // code.tl.size == 16
    heads_l2 = build_decoder_model(2, 64, 32, 3, seed=0).head_count
    heads_l1 = build_decoder_model(1, 128, 32, 3, seed=0).head_count
    ok = shape_ok and ratio_ok and heads_l2 == 12 and heads_l1 == 48
    _verdict(3, "latent geometry", ok,
             f"tl {code.tl.shape}, ratio 16, heads {heads_l2}/{heads_l1}")


def test_criterion_4_gradient_correctness(rng):
    t0 = time.time()
    worst_ops = 0.0
    op_shapes = {
        "conv2d": [(2, 3, 4, 4), (4, 3, 3, 3), (4,)],
        "stride2_downsample": [(2, 3, 4, 4)],
        "nearest_upsample2x": [(2, 3, 4, 4)],
        "concat_channels": [(2, 3, 4, 4), (2, 2, 4, 4)],
        "leaky_relu": [(2, 3, 4, 4)],
        "add": [(2, 3, 4, 4), (2, 3, 4, 4)],
        "mse_loss": [(2, 3, 4, 4), (2, 3, 4, 4)],
    }
    for kind, shapes in op_shapes.items():
        tensors = [ad.Tensor(rng.standard_normal(s), requires_grad=True) for s in shapes]
        attrs = {"slope": 0.2} if kind == "leaky_relu" else None

        def forward():
            out = ad.forward_op(kind, tensors, attrs)
            if out.data.size != 1:
                out = ad.mse_loss(out, ad.Tensor(np.zeros(out.shape)))
            return out

        worst_ops = max(worst_ops, ad.grad_check(forward, tensors, h=1e-5,
                                                 max_entries_per_param=16))

    model = DecoderModel(1, band_extent=8, base_size=4, channels=3, seed=0,
                         base_channels=4, dtype=np.float64)
    x = ad.Tensor(0.1 * rng.standard_normal((2, 3, 8, 8)))
    targets = ad.Tensor(0.1 * rng.standard_normal((2, 36, 4, 4)))

    def model_forward():
        return ad.mse_loss(ad.concat_channels(model.forward(x)), targets)

    worst_model = ad.grad_check(model_forward, model.parameters(), h=1e-5,
                                max_entries_per_param=6, seed=0)
    elapsed = time.time() - t0
    ok = worst_ops < 1e-4 and worst_model < 1e-4 and elapsed < 60.0
    _verdict(4, "gradient correctness", ok,
             f"ops {worst_ops:.2e}, model {worst_model:.2e}, {elapsed:.1f}s")


def test_criterion_5_desk_scale_training(level1_run):
    train_mse = _full_mse(level1_run["model"], level1_run["train_ds"])
    val_mse = _full_mse(level1_run["model"], level1_run["val_ds"])
    below = [h["iteration"] for h in level1_run["history"]
             if h["train_mse"] < FROZEN_TRAIN_MSE_BOUND]
    within_budget = below and below[0] <= 5000
    ratio_ok = val_mse <= 2.0 * train_mse
    time_ok = level1_run["elapsed"] < 1800.0
    ok = train_mse < FROZEN_TRAIN_MSE_BOUND and within_budget and ratio_ok and time_ok
    _verdict(5, "desk-scale training", ok,
             f"train {train_mse:.5f} < {FROZEN_TRAIN_MSE_BOUND}, "
             f"val {val_mse:.5f} (ratio {val_mse / train_mse:.2f}), "
             f"{level1_run['elapsed']:.0f}s")


def test_criterion_6_learned_beats_deterministic(level1_run):
    corpus = level1_run["corpus"]
    model = level1_run["model"]
    zero = ZeroPatchSource(model.band_extent, model.channels, model.base_size)
    wins = 0
    val_idx = level1_run["val_idx"]
    for i in val_idx:
        img = corpus.images[i]
        tl = encode(img, 1, FB).tl
        mse_zero = ((decode_level(tl, zero, FB) - img) ** 2).mean()
        mse_model = ((decode_level(tl, model, FB) - img) ** 2).mean()
        wins += mse_model < mse_zero
    frac = wins / len(val_idx)
    _verdict(6, "learned decode beats deterministic", frac >= 0.9,
             f"{wins}/{len(val_idx)} val images improved")


def test_criterion_7_truncation_trick(rng):
    latents = rng.standard_normal((256, 8, 8, 3)) * rng.uniform(0.5, 2.0, size=(1, 8, 8, 3))
    labels = np.repeat(np.arange(2), 128)
    model = fit_sampler(latents, labels)
    sigma2 = model.variances[0]
    levels = [1.0, 0.4, 0.1, 0.01]
    variances = []
    worst_dev = 0.0
    for t in levels:
        draws = np.stack(sample(model, 0, t, 10_000, seed=42)).reshape(10_000, -1)
        v = draws.var(axis=0)
        variances.append(v)
        worst_dev = max(worst_dev, float(np.abs(v / (t**2 * sigma2) - 1.0).max()))
    monotone = all(np.all(variances[i + 1] < variances[i]) for i in range(len(levels) - 1))
    ok = worst_dev < 0.10 and monotone
    _verdict(7, "truncation trick", ok,
             f"worst variance deviation {worst_dev * 100:.1f}%, monotone={monotone}")


def test_criterion_8_frechet_analytics(rng):
    stats = FeatureStats(mean=rng.random(6), covariance=rng.random(6) + 0.1, count=4)
    d_self = frechet_distance(stats, stats)
    d_mean = frechet_distance(
        FeatureStats(np.zeros(2), np.ones(2), 4),
        FeatureStats(np.array([3.0, 4.0]), np.ones(2), 4),
    )
    d_var = frechet_distance(
        FeatureStats(np.zeros(1), np.array([1.0]), 4),
        FeatureStats(np.zeros(1), np.array([4.0]), 4),
    )
    a, b = rng.random((8, 8, 1)), rng.random((8, 8, 1))
    psnr_exact = psnr(a, b) == -10.0 * np.log10(mse(a, b))
    ok = d_self < 1e-10 and abs(d_mean - 25.0) < 1e-10 and abs(d_var - 1.0) < 1e-10 and psnr_exact
    _verdict(8, "frechet distance analytics", ok,
             f"self {d_self:.1e}, mean-term {d_mean}, trace-term {d_var}, psnr identity {psnr_exact}")


def test_criterion_9_pixel_baseline_contract(rng):
    low = rng.random((16, 16, 3))
    refiner = PixelRefiner(level=1, input_extent=32, channels=3, seed=0)
    for p in refiner.parameters():
        p.data = np.zeros_like(p.data)
    bitwise = np.array_equal(pixel_decode_level(low, refiner), bilinear_upsample(low, 2))

    imgs = [rng.random((32, 32, 3)) for _ in range(6)]
    ids = [str(i) for i in range(6)]
    rows1, sum1 = compare_information_content(imgs, 1, FB, image_ids=ids)
    rows2, sum2 = compare_information_content(imgs, 1, FB, image_ids=ids)
    deterministic = rows1 == rows2 and sum1 == sum2
    ordering = ("wavelet<pixel" if sum1["wavelet_mse"] < sum1["pixel_mse"]
                else "pixel<=wavelet")
    _verdict(9, "pixel baseline contract", bitwise and deterministic,
             f"zero-refiner bitwise={bitwise}, report deterministic, {ordering} (recorded)")


def test_criterion_10_serialization(rng):
    failures = []

    code = encode(rng.random((32, 32, 3)), 1, FB)
    code.tl = code.tl.astype(np.float32)
    blob = serialize_code(code)
    if serialize_code(deserialize_code(blob)) != blob:
        failures.append("NSBC round trip")
    for fault, data, expected in (
        ("NSBC magic", b"XXXX" + blob[4:], BadMagicError),
        ("NSBC truncation", blob[:-2], TruncatedPayloadError),
    ):
        try:
            deserialize_code(data)
            failures.append(fault + " not detected")
        except expected:
            pass
        except Exception as exc:  # noqa: BLE001 - fault taxonomy is the contract
            failures.append(f"{fault} raised {type(exc).__name__}")

    latents = rng.standard_normal((8, 4, 4, 3))
    prior = fit_sampler(latents, np.repeat([0, 1], 4))
    prior.means = prior.means.astype(np.float32).astype(np.float64)
    prior.variances = prior.variances.astype(np.float32).astype(np.float64)
    pblob = serialize_sampler(prior)
    if serialize_sampler(deserialize_sampler(pblob)) != pblob:
        failures.append("NSBP round trip")
    for fault, data, expected in (
        ("NSBP magic", b"YYYY" + pblob[4:], BadMagicError),
        ("NSBP truncation", pblob[:-2], TruncatedPayloadError),
    ):
        try:
            deserialize_sampler(data)
            failures.append(fault + " not detected")
        except expected:
            pass
        except Exception as exc:  # noqa: BLE001
            failures.append(f"{fault} raised {type(exc).__name__}")

    entries = [("w", rng.standard_normal((2, 3)).astype(np.float32))]
    wblob = ad.write_checkpoint(entries)
    if ad.write_checkpoint(ad.read_checkpoint(wblob)) != wblob:
        failures.append("NSBW round trip")
    for fault, data, expected in (
        ("NSBW magic", b"ZZZZ" + wblob[4:], BadMagicError),
        ("NSBW truncation", wblob[:-1], TruncatedPayloadError),
    ):
        try:
            ad.read_checkpoint(data)
            failures.append(fault + " not detected")
        except expected:
            pass
        except Exception as exc:  # noqa: BLE001
            failures.append(f"{fault} raised {type(exc).__name__}")

    _verdict(10, "serialization", not failures, "; ".join(failures) or "all containers")

"""Batch command-line frontend.

Verbs: transform, make-dataset, train, train-pixel, encode, decode,
sample, eval, compare, gen-corpus. Global flags (--config, --seed, --out)
are accepted by every verb. Configuration is a plain key=value text file;
command-line flags override it.

Exit codes: 2 bad input, 3 geometry violation, 4 empty dataset result,
5 training diverged (last finite checkpoint is still written), 6 missing
model (the message names the level).
"""

import argparse
import csv
import os
import struct
import sys

# Cap BLAS/OpenMP pools before numpy is imported anywhere in this process;
# heavy modules are therefore imported lazily inside the commands.
_threads = os.environ.get("NSB_THREADS")
if _threads:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(_var, _threads)
del _threads

EXIT_BAD_INPUT = 2
EXIT_GEOMETRY = 3
EXIT_EMPTY = 4
EXIT_DIVERGED = 5
EXIT_MISSING_MODEL = 6


class MissingModelError(FileNotFoundError):
    pass


class EmptyResultError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

CONFIG_DEFAULTS = {
    "wavelet": "bior2.2",
    "levels": 2,
    "base_patch": 32,
    "seed": 0,
    "learning_rate": 1e-4,
    "batch_size": 16,
    "iterations": 1000,
    "corpus_dir": "corpus",
    "output_dir": "out",
    "feature_method": "pixel_moments",
    "feature_dim": 32,
}
_INT_KEYS = ("levels", "base_patch", "seed", "batch_size", "iterations", "feature_dim")
_FLOAT_KEYS = ("learning_rate",)


def load_config(path=None, overrides=None):
    """Defaults, then key=value file entries, then CLI overrides; validated."""
    cfg = dict(CONFIG_DEFAULTS)
    if path:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, value = (part.strip() for part in line.split("=", 1))
                if key not in CONFIG_DEFAULTS:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
                cfg[key] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    for key in _INT_KEYS:
        cfg[key] = int(cfg[key])
    for key in _FLOAT_KEYS:
        cfg[key] = float(cfg[key])
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    from .metrics import FEATURE_METHODS
    from .wavelet import SUPPORTED_WAVELETS

    if cfg["wavelet"] not in SUPPORTED_WAVELETS:
        raise ValueError(
            f"wavelet must be one of {', '.join(SUPPORTED_WAVELETS)}, got {cfg['wavelet']!r}"
        )
    if cfg["levels"] < 1:
        raise ValueError(f"levels must be >= 1, got {cfg['levels']}")
    p = cfg["base_patch"]
    if p < 2 or p & (p - 1):
        raise ValueError(f"base_patch must be a power of two >= 2, got {p}")
    for key in ("learning_rate", "batch_size", "iterations"):
        if cfg[key] <= 0:
            raise ValueError(f"{key} must be positive, got {cfg[key]}")
    if cfg["seed"] < 0:
        raise ValueError(f"seed must be non-negative, got {cfg['seed']}")
    if cfg["feature_method"] not in FEATURE_METHODS:
        raise ValueError(
            f"feature_method must be one of {', '.join(FEATURE_METHODS)}, "
            f"got {cfg['feature_method']!r}"
        )
    if cfg["feature_dim"] < 2:
        raise ValueError(f"feature_dim must be >= 2, got {cfg['feature_dim']}")


# ---------------------------------------------------------------------------
# Small on-disk helpers (exact band files, level-dataset tuples)
# ---------------------------------------------------------------------------

_BAND_MAGIC = b"NSBB"
_TUPLE_MAGIC = b"NSBD"
_FORMAT_VERSION = 1


def write_band_file(path, band):
    """Exact (float64) coefficients of one band; the lossless sidecar of the
    8-bit preview written next to it."""
    import numpy as np

    arr = np.ascontiguousarray(band, dtype="<f8")
    h, w, c = arr.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sHIIB", _BAND_MAGIC, _FORMAT_VERSION, h, w, c))
        fh.write(arr.tobytes())


def read_band_file(path):
    import numpy as np

    from .errors import BadMagicError, TruncatedPayloadError, VersionMismatchError

    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != _BAND_MAGIC:
        raise BadMagicError(f"{path}: not a band file")
    version, h, w, c = struct.unpack_from("<HIIB", data, 4)
    if version != _FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: band file version {version}")
    count = h * w * c
    if len(data) != 15 + 8 * count:
        raise TruncatedPayloadError(f"{path}: band payload size mismatch")
    return np.frombuffer(data, dtype="<f8", count=count, offset=15).reshape(h, w, c).copy()


def write_level_tuple(path, wavelet_name, level, quad):
    """One image's (tl, tr, bl, br) bands at one level, float32."""
    import numpy as np

    name = wavelet_name.encode("utf-8")
    tl = np.ascontiguousarray(quad.tl, dtype="<f4")
    h, w, c = tl.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(f"<4sHB{len(name)}sBIIB", _TUPLE_MAGIC, _FORMAT_VERSION,
                             len(name), name, level, h, w, c))
        for band in quad.bands():
            fh.write(np.ascontiguousarray(band, dtype="<f4").tobytes())


def read_level_tuple(path):
    import numpy as np

    from .errors import BadMagicError, TruncatedPayloadError, VersionMismatchError

    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != _TUPLE_MAGIC:
        raise BadMagicError(f"{path}: not a level-dataset file")
    version, name_len = struct.unpack_from("<HB", data, 4)
    if version != _FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: level-dataset version {version}")
    pos = 7
    name = data[pos : pos + name_len].decode("utf-8")
    pos += name_len
    level, h, w, c = struct.unpack_from("<BIIB", data, pos)
    pos += 10
    count = h * w * c
    if len(data) != pos + 4 * 4 * count:
        raise TruncatedPayloadError(f"{path}: level-dataset payload size mismatch")
    bands = []
    for _ in range(4):
        bands.append(
            np.frombuffer(data, dtype="<f4", count=count, offset=pos)
            .reshape(h, w, c)
            .astype(np.float64)
        )
        pos += 4 * count
    return name, level, bands


# ---------------------------------------------------------------------------
# Shared command plumbing
# ---------------------------------------------------------------------------


def _read_manifest(dataset_dir):
    path = os.path.join(dataset_dir, "manifest.csv")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{path}: run make-dataset first")
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(row)
    return rows


def _load_level_dataset(dataset_dir, level, stems, wavelet_name):
    import numpy as np

    from .recon import LevelDataset

    bands = ([], [], [], [])
    for stem in stems:
        path = os.path.join(dataset_dir, f"level{level}", f"{stem}.nsbd")
        name, lvl, quad = read_level_tuple(path)
        if name != wavelet_name or lvl != level:
            raise ValueError(f"{path}: holds {name!r} level {lvl}, expected {wavelet_name!r} level {level}")
        for store, band in zip(bands, quad):
            store.append(band)
    return LevelDataset(level, wavelet_name, *(np.stack(b) for b in bands))


def _decoder_path(out_dir, level):
    return os.path.join(out_dir, f"decoder_l{level}.nsbw")


def _load_decoders(models_dir, levels):
    from .recon import load_model

    models = []
    for level in range(1, levels + 1):
        path = _decoder_path(models_dir, level)
        if not os.path.exists(path):
            raise MissingModelError(f"no decoder for level {level}: {path} not found")
        models.append(load_model(path, expected_level=level, kind="decoder"))
    return models


def _normalize_band(band):
    """Affine map to [0, 1] for viewing; returns (normalized, lo, hi)."""
    lo = float(band.min())
    hi = float(band.max())
    scale = hi - lo if hi > lo else 1.0
    return (band - lo) / scale, lo, hi


def _write_band_outputs(out_dir, stem, band):
    from .ppm import write_image

    norm, lo, hi = _normalize_band(band)
    write_image(os.path.join(out_dir, f"{stem}.ppm"), norm)
    with open(os.path.join(out_dir, f"{stem}.meta"), "w") as fh:
        fh.write(f"lo={lo!r}\nhi={hi!r}\n")
    write_band_file(os.path.join(out_dir, f"{stem}.band"), band)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen_corpus(cfg, args):
    from .corpus import generate_toy_corpus

    out = args.target or cfg["corpus_dir"]
    os.makedirs(out, exist_ok=True)
    files = generate_toy_corpus(out, per_class=args.per_class, size=args.size, seed=cfg["seed"])
    print(f"wrote {len(files)} images under {out}")
    return 0


def cmd_transform(cfg, args):
    from .pyramid import full_decompose, recompose
    from .ppm import read_image, write_image
    from .wavelet import QuadDecomposition, make_filter_bank

    fb = make_filter_bank(cfg["wavelet"])
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)

    if args.inverse:
        meta_path = os.path.join(args.input, "transform.meta")
        if not os.path.exists(meta_path):
            raise ValueError(f"{args.input}: no transform.meta; not a transform output directory")
        meta = dict(
            line.strip().split("=", 1) for line in open(meta_path) if line.strip()
        )
        levels = int(meta["levels"])
        fb = make_filter_bank(meta["wavelet"])
        tl = read_band_file(os.path.join(args.input, "tl.band"))
        quads = []
        for level in range(1, levels + 1):
            bands = [
                read_band_file(os.path.join(args.input, f"l{level}_{bname}.band"))
                for bname in ("tr", "bl", "br")
            ]
            quads.append(QuadDecomposition(tl=None, tr=bands[0], bl=bands[1], br=bands[2]))
        image = recompose(quads, fb, tl=tl)
        out_path = os.path.join(out, "inverse.ppm")
        write_image(out_path, image)
        print(f"wrote {out_path}")
        return 0

    image = read_image(args.input)
    quads = full_decompose(image, cfg["levels"], fb)
    for level, quad in enumerate(quads, start=1):
        for bname, band in zip(("tr", "bl", "br"), (quad.tr, quad.bl, quad.br)):
            _write_band_outputs(out, f"l{level}_{bname}", band)
    _write_band_outputs(out, "tl", quads[-1].tl)
    with open(os.path.join(out, "transform.meta"), "w") as fh:
        fh.write(f"wavelet={fb.name}\nlevels={cfg['levels']}\n")
    print(f"wrote {3 * len(quads) + 1} bands under {out}")
    return 0


def cmd_make_dataset(cfg, args):
    from .corpus import load_corpus, split_indices
    from .pyramid import full_decompose
    from .wavelet import make_filter_bank

    fb = make_filter_bank(cfg["wavelet"])
    corpus = load_corpus(cfg["corpus_dir"])
    for path in corpus.skipped:
        print(f"warning: skipped {path}", file=sys.stderr)
    if corpus.images.shape[1] % (2 ** cfg["levels"]) or corpus.images.shape[2] % (2 ** cfg["levels"]):
        raise EmptyResultError(
            f"corpus extents {corpus.images.shape[1:3]} not divisible by 2^{cfg['levels']}"
        )
    out = cfg["output_dir"]
    for level in range(1, cfg["levels"] + 1):
        os.makedirs(os.path.join(out, f"level{level}"), exist_ok=True)

    train_idx, val_idx = split_indices(corpus.labels, cfg["seed"])
    split_of = {int(i): "train" for i in train_idx}
    split_of.update({int(i): "val" for i in val_idx})

    rows = []
    for i, (img, label, path) in enumerate(zip(corpus.images, corpus.labels, corpus.files)):
        cls = corpus.class_names[label]
        stem = f"{cls}__{os.path.splitext(os.path.basename(path))[0]}"
        for level, quad in enumerate(full_decompose(img, cfg["levels"], fb), start=1):
            write_level_tuple(
                os.path.join(out, f"level{level}", f"{stem}.nsbd"), fb.name, level, quad
            )
        rows.append({"file": stem, "class": cls, "split": split_of[i]})
    if not rows:
        raise EmptyResultError("no usable images in the corpus")
    with open(os.path.join(out, "manifest.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("file", "class", "split"))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} examples x {cfg['levels']} levels under {out}")
    return 0


def _final_split_mse(model, dataset, fb):
    from .recon import _decoder_targets, _eval_mse, _images_to_nchw

    x = _images_to_nchw(dataset.tl, model.dtype)
    t = _decoder_targets(dataset, model.base_size, fb, model.dtype)
    return _eval_mse(model, x, t.reshape(t.shape[0], -1, model.base_size, model.base_size), 16)


def cmd_train(cfg, args):
    from .errors import TrainingDivergedError
    from .recon import TrainConfig, save_model, train_decoder, write_loss_history
    from .wavelet import make_filter_bank

    out = cfg["output_dir"]
    rows = _read_manifest(out)
    train_stems = [r["file"] for r in rows if r["split"] == "train"]
    val_stems = [r["file"] for r in rows if r["split"] == "val"]
    if not train_stems:
        raise EmptyResultError("manifest holds no training examples")
    level = args.level
    fb = make_filter_bank(cfg["wavelet"])
    train_ds = _load_level_dataset(out, level, train_stems, cfg["wavelet"])
    val_ds = _load_level_dataset(out, level, val_stems, cfg["wavelet"]) if val_stems else None

    tc = TrainConfig(
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        iterations=cfg["iterations"],
        seed=cfg["seed"],
    )
    try:
        model, history = train_decoder(
            train_ds, tc, val_dataset=val_ds,
            base_channels=args.base_channels,
        )
    except TrainingDivergedError as exc:
        path = _decoder_path(out, level) + ".diverged"
        with open(path, "wb") as fh:
            fh.write(exc.checkpoint)
        print(f"training diverged at iteration {exc.iteration}; "
              f"last finite checkpoint: {path}", file=sys.stderr)
        return EXIT_DIVERGED

    save_model(model, _decoder_path(out, level))
    write_loss_history(history, os.path.join(out, f"loss_decoder_l{level}.csv"))
    train_mse = _final_split_mse(model, train_ds, fb)
    print(f"level {level} final train_mse={train_mse:.8f}", end="")
    if val_ds is not None:
        print(f" val_mse={_final_split_mse(model, val_ds, fb):.8f}")
    else:
        print()
    return 0


def cmd_train_pixel(cfg, args):
    import numpy as np

    from .errors import TrainingDivergedError
    from .pixel import bilinear_downsample, pixel_decode_level
    from .recon import TrainConfig, save_model, train_pixel_refiner, write_loss_history

    out = cfg["output_dir"]
    rows = _read_manifest(out)
    from .ppm import read_image

    level = args.level

    def load_split(split):
        lows, targets = [], []
        for r in rows:
            if r["split"] != split:
                continue
            cls, fname = r["file"].split("__", 1)
            img = read_image(os.path.join(cfg["corpus_dir"], cls, fname + ".ppm"))
            lows.append(bilinear_downsample(img, 2**level))
            targets.append(
                img if level == 1 else bilinear_downsample(img, 2 ** (level - 1))
            )
        return lows, targets

    lows, targets = load_split("train")
    if not lows:
        raise EmptyResultError("manifest holds no training examples")
    tc = TrainConfig(
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        iterations=cfg["iterations"],
        seed=cfg["seed"],
    )
    try:
        model, history = train_pixel_refiner(
            np.stack(lows), np.stack(targets), tc, level=level,
            base_channels=args.base_channels,
        )
    except TrainingDivergedError as exc:
        path = os.path.join(out, f"pixel_l{level}.nsbw.diverged")
        with open(path, "wb") as fh:
            fh.write(exc.checkpoint)
        print(f"training diverged at iteration {exc.iteration}; "
              f"last finite checkpoint: {path}", file=sys.stderr)
        return EXIT_DIVERGED

    save_model(model, os.path.join(out, f"pixel_l{level}.nsbw"))
    write_loss_history(history, os.path.join(out, f"loss_pixel_l{level}.csv"))

    def refined_mse(split):
        lows_s, targets_s = load_split(split)
        if not lows_s:
            return None
        errs = [
            ((pixel_decode_level(lo, model) - tg) ** 2).mean()
            for lo, tg in zip(lows_s, targets_s)
        ]
        return float(np.mean(errs))

    print(f"pixel level {level} final train_mse={refined_mse('train'):.8f}", end="")
    val = refined_mse("val")
    print(f" val_mse={val:.8f}" if val is not None else "")
    return 0


def cmd_encode(cfg, args):
    from .ppm import read_image
    from .pyramid import encode, serialize_code
    from .wavelet import make_filter_bank

    fb = make_filter_bank(cfg["wavelet"])
    image = read_image(args.input)
    code = encode(image, cfg["levels"], fb)
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.input))[0]
    path = os.path.join(out, f"{stem}.nsbc")
    with open(path, "wb") as fh:
        fh.write(serialize_code(code))
    print(f"wrote {path} ({code.tl.shape[0]}x{code.tl.shape[1]}x{code.channels} latent)")
    return 0


def cmd_decode(cfg, args):
    from .ppm import read_image, write_image
    from .pyramid import (
        OraclePatchSource,
        ZeroPatchSource,
        decode,
        deserialize_code,
        full_decompose,
    )
    from .wavelet import make_filter_bank

    with open(args.input, "rb") as fh:
        code = deserialize_code(fh.read())
    fb = make_filter_bank(code.wavelet_name)
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)

    if args.oracle:
        original = read_image(args.oracle)
        quads = full_decompose(original, code.levels, fb)
        models = [OraclePatchSource(q, min(cfg["base_patch"], q.tr.shape[0]), fb) for q in quads]
    elif args.zero:
        models = [
            ZeroPatchSource(
                code.original_height >> level, code.channels,
                min(cfg["base_patch"], code.original_height >> level),
            )
            for level in range(1, code.levels + 1)
        ]
    else:
        models = _load_decoders(args.models or cfg["output_dir"], code.levels)

    image = decode(code, models, fb)
    stem = os.path.splitext(os.path.basename(args.input))[0]
    path = os.path.join(out, f"{stem}_decoded.ppm")
    write_image(path, image)
    print(f"wrote {path}")
    return 0


def cmd_sample(cfg, args):
    import numpy as np

    from .ppm import write_image
    from .pyramid import PyramidCode, decode
    from .sampler import fit_sampler, sample, save_sampler
    from .wavelet import make_filter_bank

    out = cfg["output_dir"]
    rows = _read_manifest(out)
    train_rows = [r for r in rows if r["split"] == "train"]
    class_names = sorted({r["class"] for r in rows})
    if args.cls in class_names:
        class_index = class_names.index(args.cls)
    else:
        try:
            class_index = int(args.cls)
        except ValueError:
            raise ValueError(
                f"unknown class {args.cls!r}; corpus classes: {', '.join(class_names)}"
            ) from None

    level = cfg["levels"]
    tls, labels = [], []
    for r in train_rows:
        _, _, bands = read_level_tuple(os.path.join(out, f"level{level}", f"{r['file']}.nsbd"))
        tls.append(bands[0])
        labels.append(class_names.index(r["class"]))
    model = fit_sampler(np.stack(tls), np.asarray(labels))
    save_sampler(os.path.join(out, "prior.nsbp"), model)

    decoders = _load_decoders(args.models or cfg["output_dir"], level)
    fb = make_filter_bank(cfg["wavelet"])
    h, w, c = model.latent_shape
    factor = 2**level
    latents = sample(model, class_index, args.truncation, args.count, cfg["seed"])
    for i, z in enumerate(latents):
        code = PyramidCode(
            levels=level, tl=z,
            original_height=h * factor, original_width=w * factor,
            channels=c, wavelet_name=cfg["wavelet"],
        )
        image = decode(code, decoders, fb)
        path = os.path.join(out, f"sample_{class_names[class_index]}_t{args.truncation}_{i:02d}.ppm")
        write_image(path, np.clip(image, 0.0, 1.0))
    print(f"wrote {len(latents)} samples under {out} (prior: prior.nsbp)")
    return 0


def _read_image_dir(path):
    from .ppm import read_image

    files = sorted(
        f for f in os.listdir(path) if f.lower().endswith((".ppm", ".pgm"))
    )
    if not files:
        raise ValueError(f"{path}: no PPM images found")
    return [read_image(os.path.join(path, f)) for f in files]


def cmd_eval(cfg, args):
    from .metrics import FeatureSpec, eval_report, write_report_csv

    spec = FeatureSpec(method=cfg["feature_method"], dim=cfg["feature_dim"], seed=cfg["seed"])
    rows = eval_report(
        _read_image_dir(args.real),
        _read_image_dir(args.generated),
        _read_image_dir(args.recon),
        spec,
    )
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "report.csv")
    write_report_csv(rows, path)
    for row in rows:
        print(f"{row['metric']}({row['set_a']}, {row['set_b']}) = {row['value']:.6g}")
    print(f"wrote {path}")
    return 0


def cmd_compare(cfg, args):
    from .corpus import load_corpus
    from .pixel import compare_information_content, write_compare_csv
    from .wavelet import make_filter_bank

    corpus = load_corpus(cfg["corpus_dir"])
    ids = [f"{corpus.class_names[label]}__{os.path.splitext(os.path.basename(f))[0]}"
           for label, f in zip(corpus.labels, corpus.files)]
    rows, summary = compare_information_content(
        list(corpus.images), cfg["levels"], make_filter_bank(cfg["wavelet"]), image_ids=ids
    )
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "compare.csv")
    write_compare_csv(rows, summary, path)
    print(
        f"mean wavelet_mse={summary['wavelet_mse']:.8f} "
        f"pixel_mse={summary['pixel_mse']:.8f} over {len(rows)} images"
    )
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="override the configured output directory")

    parser = argparse.ArgumentParser(prog="wavepyr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", parents=[common], help="generate the seeded toy corpus")
    p.add_argument("--per-class", type=int, default=32)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--target", help="corpus directory (defaults to configured corpus_dir)")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("transform", parents=[common], help="wavelet quad split / inverse")
    p.add_argument("input", help="image file (or band directory with --inverse)")
    p.add_argument("--inverse", action="store_true")
    p.add_argument("--wavelet", dest="wavelet_flag")
    p.add_argument("--levels", type=int, dest="levels_flag")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("make-dataset", parents=[common], help="build per-level training data")
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train", parents=[common], help="train one level's decoder")
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--base-channels", type=int, default=8)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-pixel", parents=[common], help="train one pixel-path refiner")
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--base-channels", type=int, default=8)
    p.set_defaults(func=cmd_train_pixel)

    p = sub.add_parser("encode", parents=[common], help="image -> latent container")
    p.add_argument("input")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", parents=[common], help="latent container -> image")
    p.add_argument("input")
    p.add_argument("--models", help="directory holding decoder_l*.nsbw")
    p.add_argument("--oracle", help="original image: decode with true detail patches (test flag)")
    p.add_argument("--zero", action="store_true", help="decode with zero detail (low-pass only)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sample", parents=[common], help="draw class-conditional samples")
    p.add_argument("--class", dest="cls", required=True, help="class name or index")
    p.add_argument("--truncation", type=float, default=1.0)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--models", help="directory holding decoder_l*.nsbw")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", parents=[common], help="Fréchet-distance evaluation report")
    p.add_argument("--real", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--recon", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", parents=[common], help="wavelet-vs-pixel information report")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)

    from .errors import ContainerError, GeometryError, GeometryMismatchError

    try:
        overrides = {"seed": args.seed, "output_dir": args.out}
        if getattr(args, "wavelet_flag", None):
            overrides["wavelet"] = args.wavelet_flag
        if getattr(args, "levels_flag", None):
            overrides["levels"] = args.levels_flag
        cfg = load_config(args.config, overrides)
        os.makedirs(cfg["output_dir"], exist_ok=True)
        return args.func(cfg, args)
    except MissingModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_MODEL
    except EmptyResultError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (GeometryError, GeometryMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except (ContainerError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())

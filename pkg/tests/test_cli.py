"""End-to-end command-line contract: verbs, files, exit codes."""

import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from wavepyr import cli
from wavepyr.ppm import read_image, write_image


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory, mini_corpus_dir):
    """Corpus + config + dataset + a (briefly) trained level-1 decoder."""
    root = tmp_path_factory.mktemp("cli_pipeline")
    cfg = root / "cfg.txt"
    out = root / "out"
    cfg.write_text(
        "wavelet=bior2.2\n"
        "levels=1\n"
        "base_patch=32\n"
        "seed=0\n"
        "learning_rate=1e-3\n"
        "batch_size=8\n"
        "iterations=8\n"
        f"corpus_dir={mini_corpus_dir}\n"
        f"output_dir={out}\n"
    )
    assert run("make-dataset", "--config", cfg) == 0
    assert run("train", "--level", 1, "--config", cfg) == 0
    return {"root": root, "cfg": str(cfg), "out": str(out), "corpus": mini_corpus_dir}


class TestGenCorpus:
    def test_deterministic_and_complete(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("gen-corpus", "--target", a, "--per-class", 2, "--out", tmp_path / "oa") == 0
        assert run("gen-corpus", "--target", b, "--per-class", 2, "--out", tmp_path / "ob") == 0
        classes = sorted(os.listdir(a))
        assert len(classes) == 8
        for cls in classes:
            files = sorted(os.listdir(a / cls))
            assert len(files) == 2
            for f in files:
                assert (a / cls / f).read_bytes() == (b / cls / f).read_bytes()


class TestConfig:
    def test_unknown_key_rejected(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("wavelt=haar\n")
        assert run("gen-corpus", "--config", bad, "--out", tmp_path) == cli.EXIT_BAD_INPUT

    def test_invalid_value_rejected(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("wavelet=db9\n")
        assert run("gen-corpus", "--config", bad, "--out", tmp_path) == cli.EXIT_BAD_INPUT

    def test_flag_overrides_file(self, tmp_path, capsys):
        cfgf = tmp_path / "c.txt"
        cfgf.write_text("seed=3\n")
        cfg = cli.load_config(str(cfgf), {"seed": 9})
        assert cfg["seed"] == 9


class TestTransform:
    def test_forward_then_inverse_is_exact(self, tmp_path, mini_corpus_dir):
        src = os.path.join(mini_corpus_dir, "04_disks")
        image = os.path.join(src, sorted(os.listdir(src))[0])
        tdir = tmp_path / "bands"
        assert run("transform", image, "--levels", 2, "--out", tdir) == 0
        for stem in ("tl", "l1_tr", "l1_bl", "l1_br", "l2_tr"):
            for ext in (".ppm", ".meta", ".band"):
                assert (tdir / f"{stem}{ext}").exists()
        inv = tmp_path / "inv"
        assert run("transform", tdir, "--inverse", "--out", inv) == 0
        orig = read_image(image)
        back = read_image(inv / "inverse.ppm")
        np.testing.assert_array_equal(orig, back)

    def test_constant_image_zero_detail_bands(self, tmp_path):
        img_path = tmp_path / "const.ppm"
        write_image(img_path, np.full((32, 32, 3), 0.5))
        tdir = tmp_path / "bands"
        assert run("transform", img_path, "--levels", 1, "--out", tdir) == 0
        for stem in ("l1_tr", "l1_bl", "l1_br"):
            band = cli.read_band_file(str(tdir / f"{stem}.band"))
            assert np.abs(band).max() < 1e-8

    def test_levels_two_tl_extent(self, tmp_path, rng):
        img_path = tmp_path / "big.ppm"
        write_image(img_path, rng.random((256, 256, 3)))
        tdir = tmp_path / "bands"
        assert run("transform", img_path, "--levels", 2, "--out", tdir) == 0
        tl = cli.read_band_file(str(tdir / "tl.band"))
        assert tl.shape == (64, 64, 3)

    def test_unreadable_input_exit_2(self, tmp_path):
        junk = tmp_path / "junk.ppm"
        junk.write_bytes(b"definitely not a ppm")
        assert run("transform", junk, "--out", tmp_path / "o") == cli.EXIT_BAD_INPUT

    def test_odd_geometry_exit_3(self, tmp_path, rng):
        img_path = tmp_path / "odd.ppm"
        write_image(img_path, rng.random((33, 32, 3)))
        assert run("transform", img_path, "--levels", 1, "--out", tmp_path / "o") == cli.EXIT_GEOMETRY


class TestMakeDataset:
    def test_manifest_and_files(self, pipeline):
        out = pipeline["out"]
        with open(os.path.join(out, "manifest.csv"), newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 32
        assert set(rows[0]) == {"file", "class", "split"}
        n_train = sum(r["split"] == "train" for r in rows)
        assert abs(n_train - round(0.8 * len(rows))) <= 1
        for r in rows:
            assert os.path.exists(os.path.join(out, "level1", r["file"] + ".nsbd"))

    def test_deterministic_manifest(self, tmp_path, mini_corpus_dir):
        outs = []
        for sub in ("x", "y"):
            cfg = tmp_path / f"{sub}.txt"
            out = tmp_path / sub
            cfg.write_text(f"levels=1\nseed=4\ncorpus_dir={mini_corpus_dir}\noutput_dir={out}\n")
            assert run("make-dataset", "--config", cfg) == 0
            outs.append((out / "manifest.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_corrupt_image_skipped_with_warning(self, tmp_path, mini_corpus_dir, capsys):
        import shutil

        corpus = tmp_path / "corpus"
        shutil.copytree(mini_corpus_dir, corpus)
        bad = corpus / "03_checker" / "zz_broken.ppm"
        bad.write_bytes(b"P6\n10 10\n255\nshort")
        cfg = tmp_path / "c.txt"
        out = tmp_path / "out"
        cfg.write_text(f"levels=1\ncorpus_dir={corpus}\noutput_dir={out}\n")
        assert run("make-dataset", "--config", cfg) == 0
        captured = capsys.readouterr()
        assert "zz_broken" in captured.err
        with open(out / "manifest.csv", newline="") as fh:
            assert len(list(csv.DictReader(fh))) == 32  # others unaffected


class TestTrain:
    def test_outputs_exist(self, pipeline):
        out = pipeline["out"]
        assert os.path.exists(os.path.join(out, "decoder_l1.nsbw"))
        loss = os.path.join(out, "loss_decoder_l1.csv")
        with open(loss, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 8  # one row per iteration

    def test_printed_val_mse_matches_recompute(self, pipeline, capsys):
        # retrain quickly to capture stdout, then recompute from the checkpoint
        assert run("train", "--level", 1, "--config", pipeline["cfg"]) == 0
        line = [l for l in capsys.readouterr().out.splitlines() if "val_mse=" in l][-1]
        printed = float(line.split("val_mse=")[1])

        from wavepyr.cli import _load_level_dataset, _read_manifest, _final_split_mse
        from wavepyr.recon import load_model
        from wavepyr.wavelet import make_filter_bank

        out = pipeline["out"]
        rows = _read_manifest(out)
        val_stems = [r["file"] for r in rows if r["split"] == "val"]
        ds = _load_level_dataset(out, 1, val_stems, "bior2.2")
        model = load_model(os.path.join(out, "decoder_l1.nsbw"), expected_level=1)
        again = _final_split_mse(model, ds, make_filter_bank("bior2.2"))
        assert abs(again - printed) < 1e-7

    def test_divergence_exit_5_with_checkpoint(self, tmp_path, pipeline):
        cfg = tmp_path / "c.txt"
        out = pipeline["out"]
        cfg.write_text(
            f"levels=1\nlearning_rate=1e12\niterations=6\nbatch_size=8\n"
            f"corpus_dir={pipeline['corpus']}\noutput_dir={out}\n"
        )
        with np.errstate(all="ignore"):
            assert run("train", "--level", 1, "--config", cfg) == cli.EXIT_DIVERGED
        from wavepyr.autodiff import load_checkpoint

        entries = load_checkpoint(os.path.join(out, "decoder_l1.nsbw.diverged"))
        assert entries[0][0] == "meta"


class TestEncodeDecode:
    def test_encode_then_oracle_decode_reproduces_input(self, pipeline, tmp_path):
        corpus = pipeline["corpus"]
        src = os.path.join(corpus, "00_hstripes")
        image = os.path.join(src, sorted(os.listdir(src))[0])
        out = tmp_path / "o"
        assert run("encode", image, "--config", pipeline["cfg"], "--out", out) == 0
        nsbc = os.path.join(out, os.path.basename(image).replace(".ppm", ".nsbc"))
        assert run("decode", nsbc, "--oracle", image, "--config", pipeline["cfg"], "--out", out) == 0
        decoded = read_image(os.path.join(out, os.path.basename(nsbc).replace(".nsbc", "_decoded.ppm")))
        assert np.abs(decoded - read_image(image)).max() < 1e-5

    def test_decode_with_trained_model(self, pipeline, tmp_path):
        corpus = pipeline["corpus"]
        src = os.path.join(corpus, "01_vstripes")
        image = os.path.join(src, sorted(os.listdir(src))[0])
        out = pipeline["out"]
        assert run("encode", image, "--config", pipeline["cfg"]) == 0
        nsbc = os.path.join(out, os.path.basename(image).replace(".ppm", ".nsbc"))
        assert run("decode", nsbc, "--config", pipeline["cfg"]) == 0

    def test_missing_model_exit_6_names_level(self, pipeline, tmp_path, capsys):
        corpus = pipeline["corpus"]
        src = os.path.join(corpus, "02_dstripes")
        image = os.path.join(src, sorted(os.listdir(src))[0])
        out = tmp_path / "empty"
        assert run("encode", image, "--config", pipeline["cfg"], "--out", out) == 0
        nsbc = os.path.join(out, os.path.basename(image).replace(".ppm", ".nsbc"))
        code = run("decode", nsbc, "--models", tmp_path / "nowhere", "--config", pipeline["cfg"], "--out", out)
        assert code == cli.EXIT_MISSING_MODEL
        assert "level 1" in capsys.readouterr().err

    def test_geometry_mismatch_exit_3(self, pipeline, tmp_path, rng):
        big = tmp_path / "big.ppm"
        write_image(big, rng.random((128, 128, 3)))
        out = tmp_path / "o"
        assert run("encode", big, "--config", pipeline["cfg"], "--out", out) == 0
        code = run(
            "decode", out / "big.nsbc", "--models", pipeline["out"],
            "--config", pipeline["cfg"], "--out", out,
        )
        assert code == cli.EXIT_GEOMETRY


class TestSampleEvalCompare:
    def test_sample_deterministic(self, pipeline, tmp_path):
        outs = []
        for sub in ("s1", "s2"):
            out = tmp_path / sub
            import shutil

            shutil.copytree(pipeline["out"], out)
            assert run(
                "sample", "--class", "03_checker", "--truncation", 0.01, "--count", 2,
                "--config", pipeline["cfg"], "--out", out, "--seed", 11,
            ) == 0
            files = sorted(f for f in os.listdir(out) if f.startswith("sample_"))
            assert len(files) == 2
            outs.append([open(os.path.join(out, f), "rb").read() for f in files])
        assert outs[0] == outs[1]
        assert os.path.exists(tmp_path / "s1" / "prior.nsbp")

    def test_sample_accepts_class_index(self, pipeline, tmp_path):
        import shutil

        out = tmp_path / "byindex"
        shutil.copytree(pipeline["out"], out)
        assert run(
            "sample", "--class", "5", "--count", 1,
            "--config", pipeline["cfg"], "--out", out,
        ) == 0

    def test_unknown_class_exit_2(self, pipeline, capsys):
        code = run("sample", "--class", "zebra", "--count", 1, "--config", pipeline["cfg"])
        assert code == cli.EXIT_BAD_INPUT
        assert "zebra" in capsys.readouterr().err

    def test_eval_identical_sets_zero_distance(self, pipeline, tmp_path):
        src = os.path.join(pipeline["corpus"], "04_disks")
        out = tmp_path / "report"
        assert run(
            "eval", "--real", src, "--generated", src, "--recon", src,
            "--config", pipeline["cfg"], "--out", out,
        ) == 0
        with open(out / "report.csv", newline="") as fh:
            rows = {(r["metric"], r["set_b"]): r for r in csv.DictReader(fh)}
        assert float(rows[("frechet_distance", "real")]["value"]) < 1e-10
        assert float(rows[("mean_mse", "real")]["value"]) == 0.0

    def test_compare_deterministic(self, pipeline, tmp_path):
        blobs = []
        for sub in ("c1", "c2"):
            out = tmp_path / sub
            assert run("compare", "--config", pipeline["cfg"], "--out", out) == 0
            blobs.append((out / "compare.csv").read_bytes())
        assert blobs[0] == blobs[1]
        rows = list(csv.DictReader(blobs[0].decode().splitlines()))
        assert rows[-1]["image_id"] == "mean"
        assert len(rows) == 33


class TestConsoleEntry:
    def test_subprocess_with_thread_cap(self, tmp_path):
        env = dict(os.environ, NSB_THREADS="1")
        proc = subprocess.run(
            [sys.executable, "-m", "wavepyr.cli", "gen-corpus",
             "--target", str(tmp_path / "c"), "--per-class", "1",
             "--out", str(tmp_path / "o")],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0, proc.stderr
        assert "wrote" in proc.stdout

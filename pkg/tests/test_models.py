"""Decoder model geometry, head routing, persistence."""

import numpy as np
import pytest

from wavepyr import autodiff as ad
from wavepyr.errors import GeometryError, GeometryMismatchError
from wavepyr.recon import (
    DecoderModel,
    PixelRefiner,
    build_decoder_model,
    load_model,
    predict_patches,
    save_model,
)


class TestBuildGeometry:
    def test_head_counts_from_table_geometries(self):
        # 256x256 at two levels: level-1 bands are 128 (48 heads), level-2
        # bands are 64 (12 heads), with 32x32 base patches
        m2 = build_decoder_model(level=2, band_extent=64, base_size=32, channels=3, seed=0)
        assert m2.head_count == 12
        m1 = build_decoder_model(level=1, band_extent=128, base_size=32, channels=3, seed=0)
        assert m1.head_count == 48

    def test_single_patch_band_has_three_heads(self):
        m = build_decoder_model(level=1, band_extent=32, base_size=32, channels=3, seed=0)
        assert m.head_count == 3
        assert m.head_stages == 0

    def test_same_seed_bit_identical(self):
        a = build_decoder_model(1, 16, 8, 3, seed=7)
        b = build_decoder_model(1, 16, 8, 3, seed=7)
        assert a.params.keys() == b.params.keys()
        for name in a.params:
            np.testing.assert_array_equal(a.params[name].data, b.params[name].data)

    def test_different_seed_differs(self):
        a = build_decoder_model(1, 16, 8, 3, seed=7)
        b = build_decoder_model(1, 16, 8, 3, seed=8)
        assert any(
            not np.array_equal(a.params[n].data, b.params[n].data) for n in a.params
        )

    def test_band_smaller_than_base_rejected(self):
        with pytest.raises(GeometryError, match="smaller than"):
            build_decoder_model(1, 16, 32, 3, seed=0)

    def test_initialization_is_zero_mean_uniform(self):
        m = build_decoder_model(1, 32, 32, 3, seed=0, base_channels=16)
        w = m.params["trunk.enc1b.w"].data  # fan_in = 16*9
        bound = 1.0 / np.sqrt(16 * 9)
        assert w.min() >= -bound and w.max() <= bound
        assert abs(w.mean()) < bound / 5
        np.testing.assert_array_equal(m.params["trunk.enc1b.b"].data, 0.0)


class TestPredictPatches:
    def test_output_shapes_and_grids(self, rng):
        m = build_decoder_model(1, 16, 8, 3, seed=0)
        batch = rng.random((2, 16, 16, 3))
        results = predict_patches(m, batch)
        assert len(results) == 2
        for tr, bl, br in results:
            for grid in (tr, bl, br):
                assert len(grid.patches) == 4
                assert all(p.shape == (8, 8, 3) for p in grid.patches)

    def test_zeroed_heads_emit_zero_patches(self, rng):
        m = build_decoder_model(1, 16, 16, 3, seed=0)
        for name, tensor in m.params.items():
            if name.startswith("head."):
                tensor.data = np.zeros_like(tensor.data)
        (grids,) = predict_patches(m, rng.random((1, 16, 16, 3)))
        for grid in grids:
            for p in grid.patches:
                np.testing.assert_array_equal(p, 0.0)

    def test_batch_order_preserved(self, rng):
        m = build_decoder_model(1, 16, 8, 3, seed=0)
        batch = rng.random((3, 16, 16, 3))
        together = predict_patches(m, batch)
        for i in range(3):
            (alone,) = predict_patches(m, batch[i : i + 1])
            for g_all, g_one in zip(together[i], alone):
                for p_all, p_one in zip(g_all.patches, g_one.patches):
                    np.testing.assert_allclose(p_all, p_one, atol=1e-6)

    def test_extent_mismatch_rejected(self, rng):
        m = build_decoder_model(1, 16, 8, 3, seed=0)
        with pytest.raises(GeometryError, match="geometry"):
            predict_patches(m, rng.random((1, 32, 32, 3)))


class TestPersistence:
    def test_round_trip_bitwise_and_predictions(self, tmp_path, rng):
        m = build_decoder_model(2, 16, 8, 3, seed=3)
        path = tmp_path / "decoder_l2.nsbw"
        save_model(m, path)
        back = load_model(path, expected_level=2)
        for name in m.params:
            np.testing.assert_array_equal(m.params[name].data, back.params[name].data)
        x = rng.random((1, 16, 16, 3))
        a = predict_patches(m, x)[0]
        b = predict_patches(back, x)[0]
        for ga, gb in zip(a, b):
            for pa, pb in zip(ga.patches, gb.patches):
                np.testing.assert_array_equal(pa, pb)

    def test_file_round_trip_byte_exact(self, tmp_path):
        m = build_decoder_model(1, 16, 8, 1, seed=0)
        path = tmp_path / "m.nsbw"
        save_model(m, path)
        first = path.read_bytes()
        save_model(load_model(path), path)
        assert path.read_bytes() == first

    def test_wrong_level_slot_rejected(self, tmp_path):
        m = build_decoder_model(2, 16, 8, 3, seed=0)
        path = tmp_path / "decoder.nsbw"
        save_model(m, path)
        with pytest.raises(GeometryMismatchError, match="level-2"):
            load_model(path, expected_level=1)

    def test_pixel_refiner_round_trip(self, tmp_path, rng):
        r = PixelRefiner(level=1, input_extent=16, channels=3, seed=0)
        path = tmp_path / "pixel.nsbw"
        save_model(r, path)
        back = load_model(path, kind="pixel")
        img = rng.random((16, 16, 3))
        np.testing.assert_array_equal(back.predict_residual(img), r.predict_residual(img))


class TestGradFlow:
    def test_decoder_gradients_match_finite_differences(self, rng):
        """Full 8x8-band decoder vs central differences at 64-bit.

        Low-contrast data keeps the loss small so the finite-difference
        noise floor sits well below the pinned 1e-4 tolerance.
        """
        model = DecoderModel(1, band_extent=8, base_size=4, channels=3, seed=0,
                             base_channels=4, dtype=np.float64)
        x = ad.Tensor(0.1 * rng.standard_normal((2, 3, 8, 8)))
        targets = ad.Tensor(0.1 * rng.standard_normal((2, 36, 4, 4)))

        def forward():
            return ad.mse_loss(ad.concat_channels(model.forward(x)), targets)

        params = model.parameters()
        err = ad.grad_check(forward, params, max_entries_per_param=6, seed=0)
        assert err < 1e-4

    def test_corrupted_backward_detected(self, rng, monkeypatch):
        """Negative control: a sabotaged gradient rule must be flagged."""
        true_leaky = ad.leaky_relu

        def broken_leaky(x, slope=0.2):
            mask = x.data >= 0
            out = np.where(mask, x.data, slope * x.data)

            def backward_fn(g):
                ad._accumulate(x, np.where(mask, g, slope * g) * 1.5)

            return ad._result(out, (x,), backward_fn, "leaky_relu")

        model = DecoderModel(1, band_extent=8, base_size=8, channels=1, seed=0,
                             base_channels=4, dtype=np.float64)
        x = ad.Tensor(rng.standard_normal((1, 1, 8, 8)))
        targets = ad.Tensor(rng.standard_normal((1, 3, 8, 8)))

        def forward():
            return ad.mse_loss(ad.concat_channels(model.forward(x)), targets)

        monkeypatch.setattr(ad, "leaky_relu", broken_leaky)
        try:
            err = ad.grad_check(forward, model.parameters(), max_entries_per_param=4, seed=0)
        finally:
            monkeypatch.setattr(ad, "leaky_relu", true_leaky)
        assert err > 1e-2

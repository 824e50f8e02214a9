import json
import math

import numpy as np
import pytest

from gan2gan.errors import DataError
from gan2gan.metrics import (
    EvalReport,
    config_fingerprint,
    noise_stats,
    psnr,
    ssim,
)


class TestPsnr:
    def test_uniform_half_difference(self):
        # MSE = 0.25 -> 10*log10(4) = 6.0206 dB
        a = np.zeros((32, 32))
        b = np.full((32, 32), 0.5)
        assert psnr(a, b) == pytest.approx(6.0206, abs=1e-4)

    def test_identical_is_inf(self):
        a = np.random.default_rng(0).random((16, 16))
        assert psnr(a, a.copy()) == math.inf

    def test_symmetry(self, rng):
        a = rng.random((16, 16))
        b = rng.random((16, 16))
        assert psnr(a, b) == pytest.approx(psnr(b, a), abs=1e-12)

    def test_monotone_in_error(self):
        ref = np.full((16, 16), 0.5)
        vals = [psnr(ref + d, ref) for d in (0.05, 0.1, 0.2, 0.4)]
        assert vals == sorted(vals, reverse=True)

    def test_inputs_clipped(self):
        ref = np.zeros((8, 8))
        assert psnr(np.full((8, 8), -2.0), ref) == math.inf

    def test_known_mse(self):
        ref = np.zeros((8, 8))
        assert psnr(np.full((8, 8), 0.1), ref) == pytest.approx(
            10 * math.log10(1 / 0.01), abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            psnr(np.zeros((8, 8)), np.zeros((8, 9)))


class TestSsim:
    def test_identical_is_one(self, rng):
        a = rng.random((32, 32))
        assert ssim(a, a.copy()) == pytest.approx(1.0, abs=1e-12)

    def test_negative_image_scores_low(self, rng):
        a = rng.random((32, 32))
        assert ssim(a, 1.0 - a) < 0.5

    def test_too_small_rejected(self):
        with pytest.raises(DataError):
            ssim(np.zeros((10, 10)), np.zeros((10, 10)))

    def test_matches_reference_implementation(self, rng):
        skimage_metrics = pytest.importorskip("skimage.metrics")
        for _ in range(5):
            a = rng.random((48, 48))
            b = np.clip(a + 0.1 * rng.standard_normal((48, 48)), 0, 1)
            expect = skimage_metrics.structural_similarity(
                a, b, gaussian_weights=True, sigma=1.5,
                use_sample_covariance=False, data_range=1.0)
            assert ssim(a, b) == pytest.approx(expect, abs=1e-6)

    def test_color_uses_luma(self, rng):
        gray = rng.random((32, 32))
        color = np.stack([gray] * 3, axis=2)
        noisy = np.clip(gray + 0.05 * rng.standard_normal((32, 32)), 0, 1)
        noisy_color = np.stack([noisy] * 3, axis=2)
        assert ssim(color, noisy_color) == pytest.approx(
            ssim(gray, noisy), abs=1e-12)

    def test_monotone_in_noise(self, rng):
        a = rng.random((48, 48))
        vals = []
        for s in (0.02, 0.08, 0.2):
            b = np.clip(a + s * rng.standard_normal(a.shape), 0, 1)
            vals.append(ssim(a, b))
        assert vals == sorted(vals, reverse=True)


class TestNoiseStats:
    def test_gaussian_field(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((256, 256)) * 0.1
        st = noise_stats(x)
        assert st.std == pytest.approx(0.1, rel=0.02)
        assert abs(st.mean) < 0.005
        assert abs(st.lag1_corr_h) < 0.02
        assert abs(st.lag1_corr_v) < 0.02
        assert not st.degenerate

    def test_constant_is_degenerate(self):
        st = noise_stats(np.full((8, 8), 0.3))
        assert st.degenerate
        assert st.std == 0.0
        assert st.lag1_corr_h == 0.0

    def test_correlated_field_detected(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((256, 257))
        smoothed = (x[:, :-1] + x[:, 1:]) / 2  # horizontal smoothing
        st = noise_stats(smoothed)
        assert st.lag1_corr_h > 0.4
        assert abs(st.lag1_corr_v) < 0.05

    def test_too_few_samples(self):
        with pytest.raises(DataError):
            noise_stats(np.array([1.0]))

    def test_unbiased_std(self):
        x = np.array([0.0, 1.0])
        assert noise_stats(x).std == pytest.approx(math.sqrt(0.5))


class TestEvalReport:
    def test_aggregate_auto_computed(self):
        r = EvalReport([("a", 30.0, 0.9), ("b", 32.0, 0.8)])
        assert r.aggregate["mean_psnr_db"] == pytest.approx(31.0)
        assert r.aggregate["mean_ssim"] == pytest.approx(0.85)

    def test_json_round_trip_with_inf(self):
        r = EvalReport([("a", math.inf, 1.0)], config_fingerprint="abc")
        data = json.loads(r.to_json())
        assert data["per_image"][0]["psnr_db"] == "inf"
        assert data["aggregate"]["mean_psnr_db"] == "inf"
        assert data["config_fingerprint"] == "abc"

    def test_table_contains_rows(self):
        r = EvalReport([("img1", 30.1234, 0.9)])
        table = r.to_table()
        assert "img1" in table and "30.1234" in table and "mean" in table

    def test_json_deterministic(self):
        a = EvalReport([("a", 30.0, 0.9)], config_fingerprint="x")
        b = EvalReport([("a", 30.0, 0.9)], config_fingerprint="x")
        assert a.to_json() == b.to_json()


class TestFingerprint:
    def test_stable_across_key_order(self):
        assert config_fingerprint({"a": 1, "b": 2}) == \
            config_fingerprint({"b": 2, "a": 1})

    def test_sensitive_to_values(self):
        assert config_fingerprint({"a": 1}) != config_fingerprint({"a": 2})

    def test_length(self):
        assert len(config_fingerprint({"a": 1})) == 16

import numpy as np
import pytest

from gan2gan.errors import ConfigurationError, DataError
from gan2gan.wavelet import (
    DwtRule,
    ExtractionConfig,
    GcbdRule,
    ImagePatch,
    dwt2,
    extract_noise_patches,
    idwt2,
    is_smooth_dwt,
    is_smooth_gcbd,
)


def haar_matrix_oracle(x):
    """Direct matrix-form single-level Haar transform of a 2D plane."""
    n = x.shape[0]
    m = x.shape[1]
    hrow = np.zeros((n // 2, n))
    grow = np.zeros((n // 2, n))
    for i in range(n // 2):
        hrow[i, 2 * i] = hrow[i, 2 * i + 1] = 1 / np.sqrt(2)
        grow[i, 2 * i] = 1 / np.sqrt(2)
        grow[i, 2 * i + 1] = -1 / np.sqrt(2)
    hcol = np.zeros((m // 2, m))
    gcol = np.zeros((m // 2, m))
    for j in range(m // 2):
        hcol[j, 2 * j] = hcol[j, 2 * j + 1] = 1 / np.sqrt(2)
        gcol[j, 2 * j] = 1 / np.sqrt(2)
        gcol[j, 2 * j + 1] = -1 / np.sqrt(2)
    ll = hrow @ x @ hcol.T
    lh = hrow @ x @ gcol.T  # horizontal detail (column differences)
    hl = grow @ x @ hcol.T  # vertical detail (row differences)
    hh = grow @ x @ gcol.T
    return ll, lh, hl, hh


class TestDwt:
    def test_constant_patch(self):
        c = 0.3
        s = dwt2(np.full((2, 2), c))
        assert s.ll[0, 0, 0] == pytest.approx(2 * c)
        assert s.lh[0, 0, 0] == 0 and s.hl[0, 0, 0] == 0 and s.hh[0, 0, 0] == 0

    def test_two_by_two_closed_form(self):
        a, b, c, d = 1.0, 2.0, 3.0, 5.0
        s = dwt2(np.array([[a, b], [c, d]]))
        assert s.ll[0, 0, 0] == pytest.approx((a + b + c + d) / 2)
        assert s.lh[0, 0, 0] == pytest.approx((a - b + c - d) / 2)
        assert s.hl[0, 0, 0] == pytest.approx((a + b - c - d) / 2)
        assert s.hh[0, 0, 0] == pytest.approx((a - b - c + d) / 2)

    def test_matches_matrix_oracle(self, rng):
        x = rng.random((8, 6))
        s = dwt2(x)
        ll, lh, hl, hh = haar_matrix_oracle(x)
        np.testing.assert_allclose(s.ll[:, :, 0], ll, atol=1e-12)
        np.testing.assert_allclose(s.lh[:, :, 0], lh, atol=1e-12)
        np.testing.assert_allclose(s.hl[:, :, 0], hl, atol=1e-12)
        np.testing.assert_allclose(s.hh[:, :, 0], hh, atol=1e-12)

    def test_parseval(self, rng):
        x = rng.random((8, 8, 3))
        s = dwt2(x)
        coeff_energy = sum(np.sum(band ** 2) for band in (s.ll, s.lh, s.hl, s.hh))
        assert coeff_energy == pytest.approx(np.sum(x ** 2), abs=1e-9)

    def test_odd_dimension_rejected(self):
        with pytest.raises(DataError):
            dwt2(np.zeros((3, 4)))

    def test_round_trip_100_random_patches(self, rng):
        worst = 0.0
        for _ in range(100):
            x = rng.random((16, 16, 1))
            worst = max(worst, float(np.max(np.abs(idwt2(dwt2(x)) - x))))
        assert worst < 1e-10

    def test_idwt_zero_subbands(self):
        s = dwt2(np.zeros((4, 4)))
        assert np.all(idwt2(s) == 0)

    def test_ll_only_constant(self):
        s = dwt2(np.full((4, 4), 0.25))
        s.lh[...] = 0
        s.hl[...] = 0
        s.hh[...] = 0
        np.testing.assert_allclose(idwt2(s), np.full((4, 4, 1), 0.25), atol=1e-12)

    def test_idwt_shape_mismatch(self):
        s = dwt2(np.zeros((4, 4)))
        s.hh = np.zeros((3, 3, 1))
        with pytest.raises(DataError):
            idwt2(s)


class TestDwtRule:
    def test_constant_smooth_score_zero(self):
        smooth, score = is_smooth_dwt(np.full((8, 8), 0.5), 0.03)
        assert smooth and score == 0.0

    def test_gaussian_noise_mostly_accepted(self):
        # sub-band variances of white noise are equal in expectation, so the
        # acceptance rate at lambda=0.03 must be well above chance
        rng = np.random.default_rng(7)
        accepted = sum(
            is_smooth_dwt(0.5 + rng.standard_normal((96, 96)) * 25 / 255, 0.03)[0]
            for _ in range(200)
        )
        assert accepted / 200 > 0.5

    def test_checkerboard_rejected_with_score_1_5(self):
        yy, xx = np.mgrid[0:16, 0:16]
        board = ((yy + xx) % 2).astype(float)
        smooth, score = is_smooth_dwt(board, 0.15)
        # all energy in hh: variances (0, 0, 0, v) give ratio 1.5
        assert not smooth
        assert score == pytest.approx(1.5)

    def test_scale_invariance(self, rng):
        x = rng.random((16, 16))
        _, s1 = is_smooth_dwt(x, 0.1)
        _, s2 = is_smooth_dwt(3.7 * x, 0.1)
        assert s1 == pytest.approx(s2, rel=1e-9)

    def test_shift_invariance(self, rng):
        x = rng.random((16, 16))
        d1 = is_smooth_dwt(x, 0.1)
        d2 = is_smooth_dwt(x + 0.21, 0.1)
        assert d1[0] == d2[0]
        assert d1[1] == pytest.approx(d2[1], rel=1e-9)

    def test_multichannel_requires_all_channels(self, rng):
        yy, xx = np.mgrid[0:16, 0:16]
        board = ((yy + xx) % 2).astype(float)
        flat = np.full((16, 16), 0.5)
        both = np.stack([flat, board], axis=2)
        assert not is_smooth_dwt(both, 0.15)[0]

    def test_invalid_lambda(self):
        with pytest.raises(ConfigurationError):
            is_smooth_dwt(np.zeros((4, 4)), 1.5)


class TestGcbdRule:
    def test_constant_smooth(self):
        assert is_smooth_gcbd(np.full((8, 8), 0.4), 0.1, 0.1, 4)

    def test_half_black_half_white_failure_mode(self):
        # documented failure: sub-patches inside each homogeneous half pass
        # the variance test although the patch is visibly non-noise
        patch = np.zeros((8, 8))
        patch[:, 4:] = 1.0
        plane_var = patch.var()
        sub_vars = [patch[i:i + 4, j:j + 4].var()
                    for i in (0, 4) for j in (0, 4)]
        assert all(abs(v - plane_var) <= plane_var for v in sub_vars)

    def test_checkerboard_accepted_by_gcbd_rejected_by_dwt(self):
        yy, xx = np.mgrid[0:8, 0:8]
        board = 0.25 + 0.5 * ((yy + xx) % 2)
        assert is_smooth_gcbd(board, 0.1, 0.1, 4)
        assert not is_smooth_dwt(board, 0.03)[0]

    def test_bad_tiling_rejected(self):
        with pytest.raises(DataError):
            is_smooth_gcbd(np.zeros((8, 8)), 0.1, 0.1, 3)

    def test_invalid_hyperparameters(self):
        with pytest.raises(ConfigurationError):
            GcbdRule(mu=0.0, gamma=0.1)


class TestExtraction:
    def _noisy_flat_images(self, n, seed, sigma=25 / 255, size=128):
        rng = np.random.default_rng(seed)
        return [np.clip(0.5 + rng.standard_normal((size, size)) * sigma, 0, 1)
                for i in range(n)]

    def test_pure_noise_extraction_concentrates_on_true_sigma(self):
        images = self._noisy_flat_images(4, seed=3)
        cfg = ExtractionConfig(patch_size=32, rule=DwtRule(0.03))
        patches = extract_noise_patches(images, cfg)
        assert patches
        sigma = 25 / 255
        good = sum(abs(p.values.std() - sigma) <= 0.1 * sigma for p in patches)
        assert good / len(patches) >= 0.9

    def test_textured_corpus_yields_nothing(self):
        from gan2gan.toy import make_textured_images
        images = make_textured_images(4, size=64, seed=0)
        cfg = ExtractionConfig(patch_size=32, rule=DwtRule(0.03))
        assert extract_noise_patches(images, cfg) == []

    def test_patches_are_zero_mean_per_channel(self):
        images = self._noisy_flat_images(2, seed=5)
        cfg = ExtractionConfig(patch_size=32, rule=DwtRule(0.05))
        for p in extract_noise_patches(images, cfg):
            assert np.all(np.abs(p.values.mean(axis=(0, 1))) < 1e-12)

    def test_count_monotone_in_lambda(self):
        rng = np.random.default_rng(11)
        images = [np.clip(_ramp(64) + rng.standard_normal((64, 64)) * 0.08, 0, 1)
                  for _ in range(3)]
        counts = [
            len(extract_noise_patches(
                images, ExtractionConfig(patch_size=32, rule=DwtRule(lam))))
            for lam in (0.01, 0.05, 0.15, 0.4)
        ]
        assert counts == sorted(counts)

    def test_deterministic_order(self):
        images = [(img, f"src{i}") for i, img in
                  enumerate(self._noisy_flat_images(2, seed=9, size=96))]
        cfg = ExtractionConfig(patch_size=32, rule=DwtRule(0.05))
        a = extract_noise_patches(images, cfg)
        b = extract_noise_patches(images, cfg)
        assert [(p.source_id, p.offset) for p in a] == \
            [(p.source_id, p.offset) for p in b]
        assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
        # row-major per image, images in input order
        sources = [p.source_id for p in a]
        assert sources == sorted(sources)

    def test_max_patches_cap(self):
        images = self._noisy_flat_images(2, seed=13)
        cfg = ExtractionConfig(patch_size=32, rule=DwtRule(0.1), max_patches=3)
        assert len(extract_noise_patches(images, cfg)) == 3

    def test_empty_result_is_not_an_error(self, caplog):
        import logging
        with caplog.at_level(logging.WARNING):
            out = extract_noise_patches(
                [np.zeros((16, 16)) + _ramp(16) * 5],
                ExtractionConfig(patch_size=16, rule=DwtRule(0.001)))
        assert out == []

    def test_odd_patch_size_rejected(self):
        with pytest.raises(ConfigurationError):
            ExtractionConfig(patch_size=17)

    def test_image_patch_wrapper(self):
        images = [ImagePatch(np.full((32, 32), 0.5), source_id="flat")]
        cfg = ExtractionConfig(patch_size=32, rule=DwtRule(0.1))
        patches = extract_noise_patches(images, cfg)
        assert patches and patches[0].source_id == "flat"


def _ramp(size):
    return np.linspace(0, 1, size)[None, :] * np.ones((size, 1))

import numpy as np
import pytest
import scipy.ndimage

from ldct.metrics import MetricReport, evaluate, psnr, ssim


class TestPSNR:
    def test_identical_hits_cap(self):
        x = np.random.default_rng(0).random((16, 16))
        assert psnr(x, x) == 100.0

    def test_constant_offset_oracle(self):
        # MSE of a 0.1 offset is 0.01, so PSNR = 10 log10(1 / 0.01) = 20 dB
        ref = np.random.default_rng(1).random((32, 32))
        assert psnr(ref + 0.1, ref) == pytest.approx(20.0, abs=1e-12)

    def test_half_offset_oracle(self):
        ref = np.zeros((8, 8))
        assert psnr(ref + 0.5, ref) == pytest.approx(10 * np.log10(4.0), abs=1e-12)

    def test_data_range_shift(self):
        # doubling the range adds 20 log10(2) ~ 6.02 dB
        ref = np.random.default_rng(2).random((16, 16))
        x = ref + 0.05
        assert psnr(x, ref, data_range=2.0) == pytest.approx(
            psnr(x, ref, data_range=1.0) + 20 * np.log10(2.0), abs=1e-10
        )

    def test_tiny_error_capped(self):
        ref = np.zeros((8, 8))
        assert psnr(ref + 1e-10, ref) == 100.0

    def test_validation(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((5, 5)))
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((4, 4)), data_range=0.0)

    def test_monotone_in_noise_level(self):
        ref = np.random.default_rng(3).random((32, 32))
        noise = np.random.default_rng(4).standard_normal((32, 32))
        vals = [psnr(ref + s * noise, ref) for s in (0.01, 0.03, 0.1)]
        assert vals[0] > vals[1] > vals[2]


class TestSSIM:
    def test_identical_is_one(self):
        x = np.random.default_rng(5).random((32, 32))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_constant_images_match(self):
        assert ssim(np.full((16, 16), 0.4), np.full((16, 16), 0.4)) == pytest.approx(1.0)

    def test_anticorrelated_is_negative(self):
        # mirror-image fluctuations around a common mean have negative local
        # covariance everywhere; measured -0.44 for this pattern
        pat = scipy.ndimage.gaussian_filter(
            np.random.default_rng(5).standard_normal((32, 32)), 2.0
        )
        pat *= 0.2 / np.abs(pat).max()
        ref = 0.5 + pat
        x = 0.5 - pat
        val = ssim(x, ref)
        assert -1.0 <= val < 0.0
        assert val == pytest.approx(-0.4369, abs=0.01)

    def test_bounded(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            a, b = rng.random((2, 16, 16))
            assert -1.0 <= ssim(a, b) <= 1.0

    def test_blur_reduces_similarity(self):
        rng = np.random.default_rng(7)
        ref = scipy.ndimage.gaussian_filter(rng.random((48, 48)), 1.0)
        light = scipy.ndimage.gaussian_filter(ref, 1.0)
        heavy = scipy.ndimage.gaussian_filter(ref, 3.0)
        assert ssim(ref, ref) > ssim(light, ref) > ssim(heavy, ref)

    def test_more_sensitive_than_psnr_to_structure(self):
        # equal-MSE perturbations: structured (constant) vs unstructured
        rng = np.random.default_rng(8)
        ref = scipy.ndimage.gaussian_filter(rng.random((32, 32)), 1.5)
        noise = rng.standard_normal((32, 32))
        noise *= 0.05 / np.sqrt(np.mean(noise**2))
        flat = np.full((32, 32), 0.05)
        assert psnr(ref + noise, ref) == pytest.approx(psnr(ref + flat, ref), abs=0.01)
        assert ssim(ref + noise, ref) < ssim(ref + flat, ref)

    def test_minimum_size_enforced(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((10, 10)), np.zeros((10, 10)))
        ssim(np.zeros((11, 11)), np.zeros((11, 11)))

    def test_validation(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((16, 16)), np.zeros((16, 17)))
        with pytest.raises(ValueError):
            ssim(np.zeros((16, 16)), np.zeros((16, 16)), data_range=-1.0)


class TestEvaluate:
    def test_report_fields(self):
        rng = np.random.default_rng(9)
        ref = rng.random((16, 16))
        x = ref + 0.02 * rng.standard_normal((16, 16))
        rep = evaluate(x, ref, data_range=1.0)
        assert rep.psnr_db == psnr(x, ref)
        assert rep.ssim == ssim(x, ref)
        assert rep.data_range == 1.0
        d = rep.to_json_dict()
        assert set(d) == {"psnr_db", "ssim", "data_range"}

    def test_report_validates_range(self):
        with pytest.raises(ValueError):
            MetricReport(psnr_db=10.0, ssim=0.5, data_range=0.0)

"""PSNR and SSIM image-quality measures.

PSNR is reported in decibels against a fixed data range (1.0 for normalized
CT images) and capped at 100 dB, the value reported for identical images.
SSIM is the mean local structural similarity with an 11x11 Gaussian window
(sigma 1.5), constants K1=0.01, K2=0.03, and symmetric boundary handling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage

PSNR_CAP_DB = 100.0

_WIN_RADIUS = 5
_WIN_SIGMA = 1.5
_K1 = 0.01
_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    """PSNR/SSIM pair against a reference at a stated data range."""

    psnr_db: float
    ssim: float
    data_range: float

    def __post_init__(self):
        if self.data_range <= 0:
            raise ValueError("data_range must be positive")

    def to_json_dict(self):
        return {"psnr_db": self.psnr_db, "ssim": self.ssim, "data_range": self.data_range}


def _check_pair(x, ref):
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError("shape mismatch %s vs %s" % (x.shape, ref.shape))
    return x, ref


def psnr(x, ref, data_range=1.0):
    """Peak signal-to-noise ratio in dB, capped at 100."""
    x, ref = _check_pair(x, ref)
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(data_range**2 / mse)))


def _local_mean(img):
    return scipy.ndimage.gaussian_filter(
        img, _WIN_SIGMA, mode="reflect", truncate=_WIN_RADIUS / _WIN_SIGMA
    )


def ssim(x, ref, data_range=1.0):
    """Mean local SSIM with a Gaussian window."""
    x, ref = _check_pair(x, ref)
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    if min(x.shape) < 2 * _WIN_RADIUS + 1:
        raise ValueError("image smaller than the %d-pixel window" % (2 * _WIN_RADIUS + 1))

    c1 = (_K1 * data_range) ** 2
    c2 = (_K2 * data_range) ** 2
    mu_x = _local_mean(x)
    mu_r = _local_mean(ref)
    var_x = _local_mean(x * x) - mu_x * mu_x
    var_r = _local_mean(ref * ref) - mu_r * mu_r
    cov = _local_mean(x * ref) - mu_x * mu_r

    num = (2 * mu_x * mu_r + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_r**2 + c1) * (var_x + var_r + c2)
    return float(np.mean(num / den))


def evaluate(x, ref, data_range=1.0):
    """Convenience wrapper returning both metrics as a MetricReport."""
    return MetricReport(
        psnr_db=psnr(x, ref, data_range), ssim=ssim(x, ref, data_range), data_range=data_range
    )

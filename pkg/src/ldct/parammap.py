"""Regularization weight maps and the binary interchange formats.

A weight map assigns each pixel (and optionally each gradient direction) a
nonnegative TV weight.  Maps are ``(channels, H, W)`` float64 arrays with
``channels`` 1 or 2; a 1-channel map applies the same weight to both gradient
directions.

The on-disk format is shared by weight maps, images, and sinograms: an 8-byte
ASCII magic, three little-endian uint32 dimensions (height, width, channels),
then the payload as channel-major, row-major little-endian float32.  Magics
are "PMAP0001" (weight map, 1 or 2 channels), "IMGF0001" (image, channels=1),
and "SNGM0001" (sinogram: height=n_angles, width=n_bins, channels=1).  Weight
maps are validated as nonnegative on read; images and sinograms may hold any
finite values.
"""

from __future__ import annotations

import struct

import numpy as np
import scipy.ndimage

from .metrics import psnr, ssim
from .operators import grad
from .physics import lipschitz_bound
from .solvers import StepSizes, fbp_reconstruct, pd3o_run

_MAGIC_PMAP = b"PMAP0001"
_MAGIC_IMGF = b"IMGF0001"
_MAGIC_SNGM = b"SNGM0001"
_HEADER = struct.Struct("<III")
_MAX_SIDE = 2**24


class FormatError(Exception):
    """Raised when a binary file does not conform to the format."""


def scalar_map(lam, height, width):
    """Constant 1-channel weight map."""
    if lam < 0:
        raise ValueError("weight must be >= 0")
    return np.full((1, height, width), float(lam))


def edge_adaptive_map(x_ref, lam_max, beta, smooth_sigma=1.0):
    """Two-channel map that lowers the TV weight where x_ref has edges.

    Per direction, ``lam = lam_max / (1 + beta * g)`` with ``g`` the absolute
    forward-difference gradient of the Gaussian-smoothed reference image
    (``smooth_sigma=0`` skips smoothing).  Values lie in (0, lam_max].
    """
    x_ref = np.asarray(x_ref, dtype=np.float64)
    if not np.all(np.isfinite(x_ref)):
        raise ValueError("reference image must be finite")
    if lam_max <= 0:
        raise ValueError("lam_max must be positive")
    if beta < 0 or smooth_sigma < 0:
        raise ValueError("beta and smooth_sigma must be >= 0")
    smoothed = scipy.ndimage.gaussian_filter(x_ref, smooth_sigma) if smooth_sigma > 0 else x_ref
    g = np.abs(grad(smoothed))
    return lam_max / (1.0 + beta * g)


def grid_search_lambda(pairs, grid, geom, params, T, x0s=None, steps=None):
    """Pick the scalar TV weight maximizing mean PSNR over (z, x_true) pairs.

    Each grid value is run through the full solver on every pair.  ``x0s``
    supplies starting points (defaults to ramp-filtered FBP of each z);
    ``steps`` defaults to the Lipschitz-derived step sizes for ``geom`` and
    ``params``.  Returns ``(best_lam, scores)`` with ``scores`` a table in
    grid order, one dict per grid value with keys ``lam``, ``mean_psnr``,
    ``mean_ssim``.  The selection maximizes mean PSNR; ties break toward the
    smaller lambda (then the earlier grid index).
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("grid must be nonempty")
    if any(g < 0 for g in grid):
        raise ValueError("grid values must be >= 0")
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one (z, x_true) pair")
    if steps is None:
        steps = StepSizes.for_lipschitz(lipschitz_bound(geom, params))
    if x0s is None:
        x0s = [np.maximum(fbp_reconstruct(z, geom), 0.0) for z, _ in pairs]

    scores = []
    for lam in grid:
        lam_map = scalar_map(lam, geom.height, geom.width)
        psnrs, ssims = [], []
        for (z, x_true), x0 in zip(pairs, x0s):
            rec, _ = pd3o_run(x0, z, lam_map, geom, params, steps, T)
            psnrs.append(psnr(rec, x_true, data_range=1.0))
            ssims.append(ssim(rec, x_true, data_range=1.0))
        scores.append(
            {"lam": lam, "mean_psnr": float(np.mean(psnrs)), "mean_ssim": float(np.mean(ssims))}
        )

    best = 0
    for i in range(1, len(grid)):
        better = scores[i]["mean_psnr"] > scores[best]["mean_psnr"]
        tie = scores[i]["mean_psnr"] == scores[best]["mean_psnr"] and grid[i] < grid[best]
        if better or tie:
            best = i
    return grid[best], scores


def _write_block(path, magic, data, channels_allowed, check_nonneg):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        data = data[None, :, :]
    if data.ndim != 3 or data.shape[0] not in channels_allowed:
        raise FormatError("bad array shape %s" % (data.shape,))
    if not np.all(np.isfinite(data)):
        raise FormatError("entries must be finite")
    if check_nonneg and np.any(data < 0):
        raise FormatError("weight map entries must be >= 0")
    channels, height, width = data.shape
    with open(path, "wb") as f:
        f.write(magic)
        f.write(_HEADER.pack(height, width, channels))
        f.write(data.astype("<f4").tobytes())


def _read_block(path, magic, channels_allowed, check_nonneg):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8 + _HEADER.size:
        raise FormatError("file too short for header")
    if raw[:8] != magic:
        raise FormatError("bad magic %r, expected %r" % (raw[:8], magic))
    height, width, channels = _HEADER.unpack_from(raw, 8)
    if channels not in channels_allowed:
        raise FormatError("unsupported channel count %d" % channels)
    if not (0 < height <= _MAX_SIDE and 0 < width <= _MAX_SIDE):
        raise FormatError("dimensions out of range")
    count = height * width * channels
    payload = raw[8 + _HEADER.size :]
    if len(payload) != 4 * count:
        raise FormatError("payload holds %d bytes, expected %d" % (len(payload), 4 * count))
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    data = data.reshape(channels, height, width)
    if not np.all(np.isfinite(data)):
        raise FormatError("entries must be finite")
    if check_nonneg and np.any(data < 0):
        raise FormatError("weight map entries must be >= 0")
    return data


def write_pmap(lam_map, path):
    """Write a (1 or 2, H, W) weight map in PMAP format (float32 payload)."""
    _write_block(path, _MAGIC_PMAP, lam_map, (1, 2), check_nonneg=True)


def read_pmap(path):
    """Read a PMAP file; validates magic, dimensions, and nonnegativity."""
    return _read_block(path, _MAGIC_PMAP, (1, 2), check_nonneg=True)


def write_image(image, path):
    """Write an (H, W) image in IMGF format (float32 payload)."""
    _write_block(path, _MAGIC_IMGF, image, (1,), check_nonneg=False)


def read_image(path):
    """Read an IMGF file as an (H, W) array."""
    return _read_block(path, _MAGIC_IMGF, (1,), check_nonneg=False)[0]


def write_sinogram(sino, path):
    """Write an (n_angles, n_bins) sinogram in SNGM format (float32 payload)."""
    _write_block(path, _MAGIC_SNGM, sino, (1,), check_nonneg=False)


def read_sinogram(path):
    """Read an SNGM file as an (n_angles, n_bins) array."""
    return _read_block(path, _MAGIC_SNGM, (1,), check_nonneg=False)[0]

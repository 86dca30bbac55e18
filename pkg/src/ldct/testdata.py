"""Synthetic attenuation phantoms for simulation and evaluation.

Phantoms are rendered on the normalized square [-1, 1]^2 with 4x4
supersampling per pixel, so ellipse boundaries are anti-aliased and the
images downsample consistently across resolutions.  All outputs are clipped
to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EllipseSpec:
    """One additive ellipse: center in [-1,1]^2, semi-axes, rotation, value."""

    center: tuple
    semi_axes: tuple
    rotation: float
    intensity: float

    def __post_init__(self):
        if self.semi_axes[0] <= 0 or self.semi_axes[1] <= 0:
            raise ValueError("semi-axes must be positive")


# Modified Shepp-Logan values (high-contrast variant): the skull ring renders
# at 1.0 and the interior at 0.2, so clipping to [0, 1] leaves it unchanged.
_SHEPP_LOGAN = (
    EllipseSpec((0.0, 0.0), (0.69, 0.92), 0.0, 1.0),
    EllipseSpec((0.0, -0.0184), (0.6624, 0.874), 0.0, -0.8),
    EllipseSpec((0.22, 0.0), (0.11, 0.31), np.deg2rad(-18.0), -0.2),
    EllipseSpec((-0.22, 0.0), (0.16, 0.41), np.deg2rad(18.0), -0.2),
    EllipseSpec((0.0, 0.35), (0.21, 0.25), 0.0, 0.1),
    EllipseSpec((0.0, 0.1), (0.046, 0.046), 0.0, 0.1),
    EllipseSpec((0.0, -0.1), (0.046, 0.046), 0.0, 0.1),
    EllipseSpec((-0.08, -0.605), (0.046, 0.023), 0.0, 0.1),
    EllipseSpec((0.0, -0.606), (0.023, 0.023), 0.0, 0.1),
    EllipseSpec((0.06, -0.605), (0.023, 0.046), 0.0, 0.1),
)

_SUPERSAMPLE = 8


def render_ellipses(ellipses, size):
    """Sum of ellipse indicators on a size x size grid, clipped to [0, 1]."""
    fine = size * _SUPERSAMPLE
    coords = (np.arange(fine) + 0.5) * (2.0 / fine) - 1.0
    xx, yy = np.meshgrid(coords, coords)
    img = np.zeros((fine, fine))
    for e in ellipses:
        dx = xx - e.center[0]
        dy = yy - e.center[1]
        c, s = np.cos(e.rotation), np.sin(e.rotation)
        u = (dx * c + dy * s) / e.semi_axes[0]
        v = (-dx * s + dy * c) / e.semi_axes[1]
        img += e.intensity * (u * u + v * v <= 1.0)
    img = img.reshape(size, _SUPERSAMPLE, size, _SUPERSAMPLE).mean(axis=(1, 3))
    return np.clip(img, 0.0, 1.0)


def shepp_logan(size):
    """High-contrast Shepp-Logan head phantom at the given side length."""
    if size < 16:
        raise ValueError("size must be at least 16")
    return render_ellipses(_SHEPP_LOGAN, size)


def random_ellipses(
    size,
    n_ellipses,
    seed,
    center_range=0.5,
    axes_range=(0.08, 0.35),
    intensity_range=(0.1, 0.5),
    rotate=True,
):
    """Random additive-ellipse phantom, deterministic per seed.

    Centers are uniform in [-center_range, center_range]^2, semi-axes and
    intensities uniform in their ranges, rotations uniform in [0, pi) when
    ``rotate`` is set.  The sum is clipped to [0, 1].
    """
    if n_ellipses < 1:
        raise ValueError("n_ellipses must be >= 1")
    rng = np.random.default_rng(seed)
    ellipses = []
    for _ in range(n_ellipses):
        center = tuple(rng.uniform(-center_range, center_range, size=2))
        axes = tuple(rng.uniform(axes_range[0], axes_range[1], size=2))
        rot = float(rng.uniform(0.0, np.pi)) if rotate else 0.0
        val = float(rng.uniform(intensity_range[0], intensity_range[1]))
        ellipses.append(EllipseSpec(center, axes, rot, val))
    return render_ellipses(ellipses, size)

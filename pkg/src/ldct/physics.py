"""Low-dose transmission noise model and the smooth fidelity term.

A monochromatic source emits ``n0`` photons per detector bin.  For a clean
sinogram ``s = Ax`` (line integrals of attenuation, with ``mu`` the reference
attenuation coefficient in inverse meters) the detected counts are

    counts ~ Poisson(n0 * exp(-mu * s))

and the measured log-transformed sinogram is

    z = -(1/mu) * log(max(counts, min_counts) / n0)

The clamp at ``min_counts`` keeps the log finite when a bin detects nothing.

The reconstruction fidelity is the Kullback-Leibler-type negative
log-likelihood of that model, expressed directly in image space:

    h(x) = sum_i  n0*exp(-mu*(Ax)_i) - n0*exp(-mu*z_i) * (-mu*(Ax)_i + log(n0))

with gradient

    grad h(x) = A^T [ mu*n0*(exp(-mu*z) - exp(-mu*Ax)) ].

``h`` is convex (each summand is an exponential plus a linear term) and its
Hessian ``A^T diag(mu^2 n0 exp(-mu Ax)) A`` has spectral norm at most
``||A||^2 mu^2 n0`` whenever ``Ax >= 0``, which gives the Lipschitz constant
used to set solver step sizes.

Sampling uses a counter-based generator: each (bin, draw) pair is hashed with
the seed to a uniform, so results are reproducible regardless of evaluation
order or array layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.stats

from .operators import back_project, forward_project, projector_norm

# Threshold between exact inverse-CDF Poisson sampling and the rounded
# clipped normal approximation.
_NORMAL_APPROX_ABOVE = 1000.0

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class PhysicsParams:
    """Source intensity and attenuation scale of the acquisition."""

    n0: float = 4096.0
    mu: float = 81.35858
    min_counts: float = 1.0

    def __post_init__(self):
        if self.n0 <= 0:
            raise ValueError("n0 must be positive")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if not (0 < self.min_counts <= self.n0):
            raise ValueError("min_counts must lie in (0, n0]")


def _splitmix64(x):
    """SplitMix64 finalizer; maps uint64 arrays to well-mixed uint64."""
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * _MIX1
        x = (x ^ (x >> np.uint64(27))) * _MIX2
        return x ^ (x >> np.uint64(31))


def counter_uniform(seed, index, stream=0):
    """Uniform(0,1) samples keyed by (seed, index, stream).

    ``index`` is an integer array of counter values; identical keys always
    yield identical samples.  Output is clamped away from exact 0 and 1.
    """
    index = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = (
            np.uint64(seed) * _GAMMA
            + index * _MIX1
            + np.uint64(stream) * _MIX2
            + _GAMMA
        )
    bits = _splitmix64(key) >> np.uint64(11)
    u = bits.astype(np.float64) * (1.0 / 9007199254740992.0)
    return np.clip(u, 1e-16, 1.0 - 1e-16)


def _counter_poisson(lam, seed):
    """Poisson draws with mean ``lam`` via counter-based uniforms.

    Exact inverse-CDF sampling for small means; above _NORMAL_APPROX_ABOVE a
    rounded, nonnegativity-clipped normal with matched mean and variance is
    used (relative error of the approximation is negligible at that scale).
    """
    lam = np.asarray(lam, dtype=np.float64)
    idx = np.arange(lam.size, dtype=np.uint64).reshape(lam.shape)
    out = np.zeros(lam.shape, dtype=np.float64)

    small = lam <= _NORMAL_APPROX_ABOVE
    if np.any(small):
        u = counter_uniform(seed, idx[small], stream=0)
        out[small] = scipy.stats.poisson.ppf(u, lam[small])
    big = ~small
    if np.any(big):
        u1 = counter_uniform(seed, idx[big], stream=1)
        u2 = counter_uniform(seed, idx[big], stream=2)
        g = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        out[big] = np.maximum(np.round(lam[big] + np.sqrt(lam[big]) * g), 0.0)
    return out


def simulate_lowdose(clean_sino, params, seed, sample=True):
    """Simulate low-dose measurement of a clean (noise-free) sinogram.

    Draws photon counts from Poisson(n0 * exp(-mu * s)) per bin, clamps them
    to at least ``min_counts``, and returns the log-transformed sinogram
    ``z = -(1/mu) log(counts / n0)`` in the same units as the input.  With
    ``sample=False`` the expected counts replace the draws, which makes z
    equal the clean sinogram exactly (the infinite-dose limit).
    """
    clean_sino = np.asarray(clean_sino, dtype=np.float64)
    if np.any(clean_sino < 0):
        raise ValueError("clean sinogram entries must be nonnegative")
    if not sample:
        return clean_sino.copy()
    lam = params.n0 * np.exp(-params.mu * clean_sino)
    counts = _counter_poisson(lam, seed)
    counts = np.maximum(counts, params.min_counts)
    return -np.log(counts / params.n0) / params.mu


def kl_value(x, z, geom, params, sino_x=None):
    """Transmission negative log-likelihood of image ``x`` given data ``z``.

    ``sino_x`` can pass a precomputed forward projection of ``x`` to avoid
    recomputing it.
    """
    if sino_x is None:
        sino_x = forward_project(x, geom)
    expected = params.n0 * np.exp(-params.mu * sino_x)
    observed = params.n0 * np.exp(-params.mu * z)
    return float(np.sum(expected - observed * (-params.mu * sino_x + np.log(params.n0))))


def kl_gradient(x, z, geom, params, sino_x=None):
    """Gradient of kl_value with respect to ``x``; returns an image."""
    if sino_x is None:
        sino_x = forward_project(x, geom)
    expected = params.n0 * np.exp(-params.mu * sino_x)
    observed = params.n0 * np.exp(-params.mu * z)
    return back_project(params.mu * (observed - expected), geom)


def lipschitz_bound(geom, params, norm_a=None):
    """Upper bound ||A||^2 mu^2 n0 on the Lipschitz constant of grad h.

    ``norm_a`` defaults to the cached power-iteration estimate for ``geom``.
    Valid over the nonnegative orthant, where ``exp(-mu * Ax) <= 1``.
    """
    if norm_a is None:
        norm_a = projector_norm(geom)
    if norm_a <= 0:
        raise ValueError("norm_a must be positive")
    return float(norm_a**2 * params.mu**2 * params.n0)

"""Solvers for spatially weighted TV reconstruction, plus FBP.

The variational problem is

    min_x  h(x) + ||Lam * Dx||_1 + I{x >= 0}

with ``h`` the smooth transmission log-likelihood (physics module), ``D`` the
forward-difference gradient and ``Lam`` a per-pixel, per-direction weight map.
The main solver is a primal-dual three-operator splitting: with ``f`` the
weighted l1 term composed with ``D``, ``g`` the nonnegativity indicator, and
``tau``, ``sigma`` primal/dual steps, each iteration performs

    q_{k+1}    = prox_{sigma f*}(q_k + sigma * D xbar_k)
    p_{k+1}    = prox_{tau g}(p_k - tau * grad_h(p_k) - tau * D^T q_{k+1})
    xbar_{k+1} = 2 p_{k+1} - p_k + tau * grad_h(p_k) - tau * grad_h(p_{k+1})

from ``p_0 = xbar_0 = x0`` and ``q_0 = 0``.  The gradient of ``h`` at the new
primal iterate is cached so each iteration costs exactly one gradient
evaluation.  The conjugate prox of the weighted l1 norm is a clamp to the box
[-Lam, Lam] (independent of sigma) and the prox of the indicator is the
projection onto the nonnegative orthant (independent of tau).

With ``h`` disabled the iteration reduces exactly to a dual-first PDHG; with
``Lam = 0`` it reduces exactly to projected gradient descent.  Both
degenerations are exercised by the test suite.

The returned reconstruction is ``p_T``, the feasible (nonnegative) primal
iterate; the extrapolated iterate may leave the orthant and is not returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import physics as _physics
from .operators import back_project, div_adjoint, grad

# Analytic bound on ||D D^T|| for the unit-spacing forward-difference
# gradient in 2-D.
GRAD_NORM_SQ = 8.0


@dataclass(frozen=True)
class StepSizes:
    """Primal/dual step sizes.

    Build through ``for_lipschitz`` so the product condition
    ``tau * sigma * norm_kkt <= 1`` is enforced; ``relax`` scales the primal
    step below its maximum ``2/L``.
    """

    tau: float
    sigma: float
    relax: float = 1.0

    def __post_init__(self):
        if not (self.tau > 0 and self.sigma > 0):
            raise ValueError("step sizes must be positive")
        if not (0 < self.relax <= 1):
            raise ValueError("relax must lie in (0, 1]")

    @classmethod
    def for_lipschitz(cls, lip, norm_kkt=GRAD_NORM_SQ, relax=1.0):
        """Steps tau = relax*2/lip and sigma = 1/(tau*norm_kkt)."""
        if lip <= 0:
            raise ValueError("Lipschitz constant must be positive")
        tau = relax * 2.0 / lip
        sigma = 1.0 / (tau * norm_kkt)
        if tau * sigma * norm_kkt > 1 + 1e-12:
            raise ValueError("step-size product condition violated")
        return cls(tau=tau, sigma=sigma, relax=relax)


@dataclass
class SolverState:
    """Iterates exposed to per-iteration callbacks."""

    p: np.ndarray
    q: np.ndarray
    x_bar: np.ndarray
    k: int
    cached_grad_h_p: np.ndarray


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a solver run.

    ``trace`` holds (iteration, objective) pairs: the initial point plus one
    entry after every ``log_every``-th iteration (empty when logging is off).
    ``primal_change`` is the final relative step ||p_T - p_{T-1}|| / ||p_{T-1}||
    (absolute norm if the denominator vanishes).
    """

    iterations: int
    primal_change: float
    trace: tuple = field(default_factory=tuple)

    def to_json_dict(self):
        return {
            "iterations": self.iterations,
            "primal_change": self.primal_change,
            "trace": [[int(k), float(v)] for k, v in self.trace],
        }


def _lam_field(lam, image_shape):
    """Normalize a weight spec to a (2, H, W) nonnegative array.

    Accepts a scalar, a (1, H, W) map (broadcast to both directions), or a
    (2, H, W) map.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim == 0:
        lam = np.full((2,) + image_shape, float(lam))
    elif lam.shape == (1,) + image_shape:
        lam = np.broadcast_to(lam, (2,) + image_shape)
    elif lam.shape != (2,) + image_shape:
        raise ValueError("weight map shape %s incompatible with image %s" % (lam.shape, image_shape))
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("weight map entries must be finite and >= 0")
    return lam


def prox_box_dual(v, lam):
    """Clamp a gradient field to the box [-Lam, +Lam] elementwise.

    This is the prox of the conjugate of ``q -> ||Lam * q||_1`` for any
    positive step, so no step parameter appears.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 3 or v.shape[0] != 2:
        raise ValueError("expected a (2, H, W) gradient field")
    lam = _lam_field(lam, v.shape[1:])
    return np.clip(v, -lam, lam)


def prox_nonneg(v):
    """Euclidean projection onto the nonnegative orthant."""
    return np.maximum(np.asarray(v, dtype=np.float64), 0.0)


def _weighted_tv(p, lam_field):
    return float(np.sum(lam_field * np.abs(grad(p))))


def pd3o_run(
    x0,
    z,
    lam,
    geom,
    params,
    steps,
    T,
    log_every=0,
    callback=None,
    grad_h=None,
    value_h=None,
):
    """Run T iterations of the three-operator splitting; return (image, report).

    ``lam`` is a scalar or a (1 or 2, H, W) weight map.  The smooth term
    defaults to the transmission log-likelihood built from ``z``, ``geom`` and
    ``params``; passing ``params=None`` disables it, and ``grad_h`` /
    ``value_h`` callables override it entirely (``geom`` may then be None,
    and ``z`` is ignored).  ``callback``, if given, receives the SolverState
    after every iteration.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    x0 = np.asarray(x0, dtype=np.float64)
    if np.any(x0 < 0):
        raise ValueError("x0 must be nonnegative")
    if geom is not None and x0.shape != geom.image_shape:
        raise ValueError("x0 shape %s does not match geometry" % (x0.shape,))
    if params is not None and grad_h is not None:
        raise ValueError("pass either params or explicit h callables, not both")

    if grad_h is None:
        if params is None:
            grad_h = lambda p: 0.0
            value_h = lambda p: 0.0
        else:
            z = np.asarray(z, dtype=np.float64)
            grad_h = lambda p: _physics.kl_gradient(p, z, geom, params)
            value_h = lambda p: _physics.kl_value(p, z, geom, params)
    elif value_h is None:
        value_h = lambda p: 0.0

    lam_f = _lam_field(lam, x0.shape)
    tau, sigma = steps.tau, steps.sigma

    p = x0.copy()
    x_bar = x0.copy()
    q = np.zeros((2,) + x0.shape)
    gp = np.asarray(grad_h(p), dtype=np.float64)

    trace = []
    if log_every > 0:
        trace.append((0, value_h(p) + _weighted_tv(p, lam_f)))

    primal_change = 0.0
    for k in range(1, T + 1):
        q = np.clip(q + sigma * grad(x_bar), -lam_f, lam_f)
        p_new = prox_nonneg(p - tau * gp - tau * div_adjoint(q))
        gp_new = np.asarray(grad_h(p_new), dtype=np.float64)
        x_bar = 2.0 * p_new - p + tau * gp - tau * gp_new

        if not np.all(np.isfinite(p_new)):
            raise FloatingPointError("non-finite iterate at k=%d; check step sizes" % k)
        if k == T:
            dn = np.linalg.norm(p_new - p)
            pn = np.linalg.norm(p)
            primal_change = float(dn / pn) if pn > 0 else float(dn)
        p, gp = p_new, gp_new

        if log_every > 0 and k % log_every == 0:
            trace.append((k, value_h(p) + _weighted_tv(p, lam_f)))
        if callback is not None:
            callback(SolverState(p=p, q=q, x_bar=x_bar, k=k, cached_grad_h_p=gp))

    return p, SolveReport(iterations=T, primal_change=primal_change, trace=tuple(trace))


def pdhg_run(x0, z, lam, geom, T, steps=None, callback=None):
    """Dual-first PDHG for min ||Lam * Dx||_1 + I{x>=0}; returns the image.

    Reference solver for the TV-plus-constraint problem without a smooth
    term; ``z`` is accepted for signature symmetry but unused.  Default steps
    are tau = sigma = 1/sqrt(||DD^T||).
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    x0 = np.asarray(x0, dtype=np.float64)
    if geom is not None and x0.shape != geom.image_shape:
        raise ValueError("x0 shape %s does not match geometry" % (x0.shape,))
    if steps is None:
        root = 1.0 / np.sqrt(GRAD_NORM_SQ)
        steps = StepSizes(tau=root, sigma=root)
    lam_f = _lam_field(lam, x0.shape)
    tau, sigma = steps.tau, steps.sigma

    p = x0.copy()
    x_bar = x0.copy()
    q = np.zeros((2,) + x0.shape)
    for k in range(1, T + 1):
        q = np.clip(q + sigma * grad(x_bar), -lam_f, lam_f)
        p_new = prox_nonneg(p - tau * div_adjoint(q))
        x_bar = 2.0 * p_new - p
        p = p_new
        if callback is not None:
            callback(SolverState(p=p, q=q, x_bar=x_bar, k=k, cached_grad_h_p=np.zeros_like(p)))
    return p


def _ramp_kernel_fourier(padded, filter_kind):
    """Fourier response of the band-limited ramp at unit detector spacing."""
    kernel = np.zeros(padded)
    kernel[0] = 0.25
    odd = np.arange(1, padded // 2 + 1, 2)
    kernel[odd] = -1.0 / (np.pi * odd) ** 2
    kernel[-odd] = -1.0 / (np.pi * odd) ** 2
    resp = 2.0 * np.real(np.fft.fft(kernel))
    if filter_kind == "ramlak":
        return resp
    if filter_kind == "hann":
        return resp * 0.5 * (1.0 + np.cos(2.0 * np.pi * np.fft.fftfreq(padded)))
    raise ValueError("unknown filter kind %r" % (filter_kind,))


def fbp_reconstruct(z, geom, filter_kind="ramlak"):
    """Filtered back projection of a (possibly noisy) log sinogram.

    Each projection is ramp-filtered in the frequency domain (band-limited
    ramp; optional Hann apodization for noisy data), back projected with the
    projector adjoint, and scaled by pi / (2 * n_angles * pixel_spacing^2):
    the pi/(2 n_angles) factor is the angular quadrature weight against the
    doubled kernel response, and 1/pixel_spacing^2 converts the adjoint's
    intersection-length weighting into an angular-average backprojection
    (detector spacing cancels).  Linear in z.
    """
    z = np.asarray(z, dtype=np.float64)
    if geom.n_angles < 2:
        raise ValueError("FBP needs at least 2 angles")
    if z.shape != geom.sinogram_shape:
        raise ValueError("sinogram shape %s does not match geometry" % (z.shape,))
    if not np.all(np.isfinite(z)):
        raise ValueError("sinogram must be finite")

    n = geom.n_bins
    padded = 64
    while padded < 2 * n:
        padded *= 2
    resp = _ramp_kernel_fourier(padded, filter_kind)
    spectrum = np.fft.fft(z, n=padded, axis=1) * resp[None, :]
    filtered = np.real(np.fft.ifft(spectrum, axis=1))[:, :n]

    scale = np.pi / (2.0 * geom.n_angles * geom.pixel_spacing**2)
    return back_project(filtered, geom) * scale

"""Parallel-beam tomographic operators and discrete image gradients.

The projector is ray-driven (Joseph's method): each detector line integral
steps along the dominant axis of the ray direction and linearly interpolates
between the two adjacent pixels on the perpendicular axis.  The full system
matrix for a geometry is assembled once as a scipy CSR matrix and cached, so
the forward and back projections are sparse mat-vecs and the adjoint pair
matches to machine precision by construction.

Conventions
-----------
Images are square ``(H, W)`` float64 arrays.  Pixel centers sit on a regular
grid centered on the origin, ``x = (j - (W-1)/2) * pixel_spacing`` and
``y = (i - (H-1)/2) * pixel_spacing`` with row index ``i`` increasing along
``y``.  A projection angle ``theta`` measures the detector-line normal, so a
ray with offset ``s`` is the line ``{(x, y) : x cos(theta) + y sin(theta) = s}``
and detector bin ``k`` sits at ``s_k = (k - (n_bins-1)/2) * detector_spacing``.
Sinograms are ``(n_angles, n_bins)`` arrays of line integrals in physical
length units.

Image gradients use unit-spacing forward differences with a Neumann (edge
clamp) boundary, so the gradient operator norm is bounded by ``sqrt(8)``
independent of the geometry.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse


@dataclass(frozen=True)
class Geometry:
    """Scan geometry for a 2-D parallel-beam acquisition.

    ``angles`` is stored as a tuple so the instance is hashable and can key
    the system-matrix cache.
    """

    height: int
    width: int
    angles: tuple
    n_bins: int
    pixel_spacing: float
    detector_spacing: float

    def __post_init__(self):
        if self.height != self.width:
            raise ValueError("image must be square, got %dx%d" % (self.height, self.width))
        if self.height < 2:
            raise ValueError("image side must be at least 2")
        if self.n_bins < 1:
            raise ValueError("n_bins must be positive")
        if self.pixel_spacing <= 0 or self.detector_spacing <= 0:
            raise ValueError("spacings must be positive")
        angles = np.asarray(self.angles, dtype=float)
        if angles.ndim != 1 or angles.size == 0:
            raise ValueError("angles must be a non-empty 1-D sequence")
        if np.any(angles < 0) or np.any(angles >= np.pi):
            raise ValueError("angles must lie in [0, pi)")
        if np.any(np.diff(angles) <= 0):
            raise ValueError("angles must be strictly increasing")
        object.__setattr__(self, "angles", tuple(float(a) for a in angles))

    @property
    def n_angles(self):
        return len(self.angles)

    @property
    def image_shape(self):
        return (self.height, self.width)

    @property
    def sinogram_shape(self):
        return (len(self.angles), self.n_bins)

    def to_json(self):
        """Serialize to a JSON string.

        A uniform angle grid over [0, pi) is stored implicitly through
        ``n_angles`` and regenerates bit-exactly; any other grid is stored as
        an explicit ``angles_deg`` list.
        """
        d = {
            "n_angles": self.n_angles,
            "n_bins": self.n_bins,
            "height": self.height,
            "width": self.width,
            "pixel_spacing": self.pixel_spacing,
            "detector_spacing": self.detector_spacing,
        }
        if self.angles != uniform_angles(self.n_angles):
            d["angles_deg"] = [np.rad2deg(a) for a in self.angles]
        return json.dumps(d)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if "angles_deg" in d:
            angles = tuple(np.deg2rad(a) for a in d["angles_deg"])
        else:
            angles = uniform_angles(int(d["n_angles"]))
        return cls(
            height=int(d["height"]),
            width=int(d["width"]),
            angles=angles,
            n_bins=int(d["n_bins"]),
            pixel_spacing=float(d["pixel_spacing"]),
            detector_spacing=float(d["detector_spacing"]),
        )


def uniform_angles(n_angles):
    """n_angles equispaced projection angles covering [0, pi)."""
    return tuple(float(a) for a in np.arange(n_angles) * np.pi / n_angles)


def desk_scale_geometry(size=128, n_angles=None, domain_width=0.26):
    """Standard evaluation geometry for a ``size`` x ``size`` image.

    The physical field of view is ``domain_width`` meters across (0.26 m
    default), angles cover [0, pi) uniformly, and the detector has
    ``2*ceil(size*sqrt(2)/2) + 1`` bins at pixel pitch so the corner-to-corner
    diagonal is covered.  ``n_angles`` defaults to ``round(180 * size / 128)``.
    """
    if n_angles is None:
        n_angles = int(round(180 * size / 128))
    pixel_spacing = domain_width / size
    n_bins = 2 * int(np.ceil(size * np.sqrt(2) / 2)) + 1
    angles = uniform_angles(n_angles)
    return Geometry(
        height=size,
        width=size,
        angles=angles,
        n_bins=n_bins,
        pixel_spacing=pixel_spacing,
        detector_spacing=pixel_spacing,
    )


def _angle_entries(theta, s, n, dx):
    """COO entries of one projection row block for angle ``theta``.

    Returns ``(bins, cols, vals)`` index arrays: ``bins[t]`` is the detector
    bin, ``cols[t]`` the flat pixel index, ``vals[t]`` the intersection weight
    (interpolation weight times step length).
    """
    c = (n - 1) / 2.0
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    n_bins = s.size
    grid = (np.arange(n) - c) * dx

    if sin_t >= abs(cos_t):
        # March along columns x_j, interpolate between rows at y = (s - x cos)/sin.
        frac = (s[:, None] - grid[None, :] * cos_t) / (sin_t * dx) + c
        step = dx / sin_t
        fixed = np.broadcast_to(np.arange(n)[None, :], frac.shape)
        interp_is_row = True
    else:
        # March along rows y_i, interpolate between columns at x = (s - y sin)/cos.
        frac = (s[:, None] - grid[None, :] * sin_t) / (cos_t * dx) + c
        step = dx / abs(cos_t)
        fixed = np.broadcast_to(np.arange(n)[None, :], frac.shape)
        interp_is_row = False

    lo = np.floor(frac).astype(np.int64)
    w_hi = frac - lo
    bins = np.broadcast_to(np.arange(n_bins)[:, None], frac.shape)

    entries = []
    for idx, w in ((lo, 1.0 - w_hi), (lo + 1, w_hi)):
        ok = (idx >= 0) & (idx < n) & (w > 0)
        if interp_is_row:
            cols = idx[ok] * n + fixed[ok]
        else:
            cols = fixed[ok] * n + idx[ok]
        entries.append((bins[ok], cols, w[ok] * step))
    b = np.concatenate([e[0] for e in entries])
    cc = np.concatenate([e[1] for e in entries])
    vv = np.concatenate([e[2] for e in entries])
    return b, cc, vv


@functools.lru_cache(maxsize=8)
def system_matrix(geom):
    """Sparse CSR system matrix mapping flat images to flat sinograms."""
    n = geom.height
    s = (np.arange(geom.n_bins) - (geom.n_bins - 1) / 2.0) * geom.detector_spacing
    rows, cols, vals = [], [], []
    for a, theta in enumerate(geom.angles):
        b, cc, vv = _angle_entries(theta, s, n, geom.pixel_spacing)
        rows.append(b + a * geom.n_bins)
        cols.append(cc)
        vals.append(vv)
    mat = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(geom.n_angles * geom.n_bins, n * n),
    )
    return mat.tocsr()


@functools.lru_cache(maxsize=8)
def _system_matrix_t(geom):
    return system_matrix(geom).T.tocsr()


def forward_project(image, geom):
    """Line integrals of ``image`` under ``geom``; returns a sinogram."""
    image = np.asarray(image, dtype=np.float64)
    if image.shape != geom.image_shape:
        raise ValueError("image shape %s does not match geometry %s" % (image.shape, geom.image_shape))
    out = system_matrix(geom) @ image.ravel()
    return out.reshape(geom.sinogram_shape)


def back_project(sino, geom):
    """Exact adjoint of forward_project; returns an image."""
    sino = np.asarray(sino, dtype=np.float64)
    if sino.shape != geom.sinogram_shape:
        raise ValueError("sinogram shape %s does not match geometry %s" % (sino.shape, geom.sinogram_shape))
    out = _system_matrix_t(geom) @ sino.ravel()
    return out.reshape(geom.image_shape)


def grad(image):
    """Forward-difference gradient with edge clamp; returns (2, H, W).

    Channel 0 differences along rows (vertical), channel 1 along columns
    (horizontal).  The last row/column of each channel is zero.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("expected a 2-D image")
    g = np.zeros((2,) + image.shape, dtype=np.float64)
    g[0, :-1, :] = image[1:, :] - image[:-1, :]
    g[1, :, :-1] = image[:, 1:] - image[:, :-1]
    return g


def div_adjoint(field):
    """Adjoint of grad (negative divergence); maps (2, H, W) to (H, W)."""
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 3 or field.shape[0] != 2:
        raise ValueError("expected a (2, H, W) gradient field")
    out = np.zeros(field.shape[1:], dtype=np.float64)
    out[:-1, :] -= field[0, :-1, :]
    out[1:, :] += field[0, :-1, :]
    out[:, :-1] -= field[1, :, :-1]
    out[:, 1:] += field[1, :, :-1]
    return out


def op_norm_power(apply, apply_adjoint, input_shape, tol=1e-6, max_iter=1000, seed=0):
    """Largest singular value of a linear map by power iteration on A^T A.

    Iterates ``v <- A^T A v / ||.||`` from a seeded random start and returns
    ``sqrt(||A^T A v||)`` once the estimate changes by less than ``tol``
    relatively (or after ``max_iter`` iterations).  The estimate approaches
    the true norm from below.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(input_shape)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("degenerate start vector")
    v = v / nv
    est = 0.0
    for _ in range(max_iter):
        w = apply_adjoint(apply(v))
        nw = np.linalg.norm(w)
        if not np.isfinite(nw):
            raise FloatingPointError("power iteration diverged")
        if nw == 0:
            return 0.0
        new_est = float(np.sqrt(nw))
        v = w / nw
        if est > 0 and abs(new_est - est) <= tol * est:
            return new_est
        est = new_est
    return est


@functools.lru_cache(maxsize=8)
def projector_norm(geom):
    """Cached ||A|| estimate for the geometry's forward projector."""
    return op_norm_power(
        lambda x: forward_project(x, geom),
        lambda y: back_project(y, geom),
        geom.image_shape,
    )

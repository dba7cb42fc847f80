"""Hyperbolic space H^d in the hyperboloid model.

Points satisfy <x, x>_L = -1 with x_0 > 0, where <u, v>_L = -u_0 v_0 + sum u_i v_i.
Isometries are the orthochronous Lorentz matrices (L^T J L = J, L_00 > 0).
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.stats import ortho_group

from .base import Manifold, as_rng
from .isometries import MatrixIsometry, minkowski_form

logger = logging.getLogger(__name__)

_SMALL_DIST = 1e-12


def lorentz_inner(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.sum(u[..., 1:] * v[..., 1:], axis=-1) - u[..., 0] * v[..., 0]


def boost_to(point: np.ndarray) -> np.ndarray:
    """The Lorentz boost taking the origin (1, 0, ..., 0) to `point`."""
    x0 = point[0]
    xs = point[1:]
    size = point.shape[0]
    m = np.empty((size, size))
    m[0, 0] = x0
    m[0, 1:] = xs
    m[1:, 0] = xs
    m[1:, 1:] = np.eye(size - 1) + np.outer(xs, xs) / (1.0 + x0)
    return m


@dataclass(frozen=True)
class Hyperbolic(Manifold):
    """Curvature -1 hyperbolic space of dimension d."""

    dim: int = 2
    # Standard deviation of the spatial coordinates of random points.
    spread: float = 1.0

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"hyperbolic dimension must be at least 2, got {self.dim}")

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1

    @property
    def is_rigid(self) -> bool:
        return True

    def origin(self) -> np.ndarray:
        o = np.zeros(self.ambient_dim)
        o[0] = 1.0
        return o

    def point_defect(self, points):
        points = np.asarray(points, dtype=float)
        on_sheet = np.where(points[..., 0] > 0, 0.0, 1.0)
        return np.abs(lorentz_inner(points, points) + 1.0) + on_sheet

    def project(self, points):
        """Rescale onto the hyperboloid (removes rounding drift)."""
        points = np.asarray(points, dtype=float)
        return points / np.sqrt(-lorentz_inner(points, points))[..., None]

    def dist(self, p, q):
        # <p-q, p-q>_L = 4 sinh^2(d/2); accurate for nearby points, unlike arccosh(-<p,q>_L).
        diff = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
        chord = np.sqrt(np.maximum(lorentz_inner(diff, diff), 0.0))
        return 2.0 * np.arcsinh(chord / 2.0)

    def geodesic_point(self, p, q, t):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        theta = self.dist(p, q)
        small = theta < _SMALL_DIST
        sinh = np.where(small, 1.0, np.sinh(theta))
        a = np.where(small, 1.0 - t, np.sinh((1.0 - t) * theta) / sinh)
        b = np.where(small, t, np.sinh(t * theta) / sinh)
        return self.project(a[..., None] * p + b[..., None] * q)

    def log(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        theta = self.dist(p, q)
        w = q + lorentz_inner(p, q)[..., None] * p
        norm = np.sqrt(np.maximum(lorentz_inner(w, w), 0.0))
        scale = np.where(norm > 0, theta / np.where(norm > 0, norm, 1.0), 0.0)
        return scale[..., None] * w

    def inner(self, p, u, v):
        return lorentz_inner(u, v)

    def random_point(self, rng=None, size=None):
        rng = as_rng(rng)
        shape = (self.dim,) if size is None else (size, self.dim)
        spatial = rng.normal(scale=self.spread, size=shape)
        x0 = np.sqrt(1.0 + np.sum(spatial * spatial, axis=-1, keepdims=True))
        return np.concatenate([x0, spatial], axis=-1)

    def identity_isometry(self) -> MatrixIsometry:
        return MatrixIsometry(np.eye(self.ambient_dim), kind="lorentz")

    def random_isometry(self, rng=None) -> MatrixIsometry:
        """A boost to a random point composed with a random rotation fixing the origin."""
        rng = as_rng(rng)
        rotation = np.eye(self.ambient_dim)
        rotation[1:, 1:] = ortho_group.rvs(self.dim, random_state=rng)
        boost = boost_to(self.random_point(rng))
        return MatrixIsometry(boost @ rotation, kind="lorentz")

    def fit_isometry(self, xs, ys):
        """Least-squares matrix, then L <- L (J L^T J L)^(-1/2) onto O(1, d)."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        at, *_ = np.linalg.lstsq(xs, ys, rcond=None)
        raw = at.T
        j = minkowski_form(self.ambient_dim)
        gram = j @ raw.T @ j @ raw
        root = np.real(scipy.linalg.sqrtm(gram))
        g = MatrixIsometry(raw @ np.linalg.inv(root), kind="lorentz")
        residual = float(np.max(self.dist(g.apply(xs), ys)))
        if g.matrix[0, 0] <= 0:
            logger.debug("fitted Lorentz matrix is not orthochronous")
            residual = float("inf")
        return g, residual

    def to_json(self) -> dict:
        return {"hyperbolic": {"dim": self.dim}}

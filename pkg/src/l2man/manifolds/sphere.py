"""Round sphere S^d in its ambient embedding in R^(d+1)."""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.stats import ortho_group

from ..errors import InvalidIsometry, NonUniqueGeodesic, UnsupportedVariant
from .base import Manifold, as_rng
from .isometries import MatrixIsometry

logger = logging.getLogger(__name__)

# |p + q| below this means p and q are antipodal and the geodesic is not unique.
ANTIPODAL_TOL = 1e-9
# Below this angle slerp weights fall back to their linear limits.
_SMALL_ANGLE = 1e-12


@dataclass(frozen=True)
class Sphere(Manifold):
    """Unit sphere with the round metric; geodesics by slerp, isometries O(d+1)."""

    dim: int = 2

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"sphere dimension must be at least 2, got {self.dim}")

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1

    @property
    def is_rigid(self) -> bool:
        return True

    def point_defect(self, points):
        return np.abs(np.linalg.norm(points, axis=-1) - 1.0)

    def dist(self, p, q):
        # atan2 form stays accurate near 0 and near pi, unlike arccos(<p,q>).
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return 2.0 * np.arctan2(np.linalg.norm(p - q, axis=-1), np.linalg.norm(p + q, axis=-1))

    def ensure_unique_geodesic(self, p, q) -> None:
        gap = np.linalg.norm(np.asarray(p, dtype=float) + np.asarray(q, dtype=float), axis=-1)
        if np.any(gap < ANTIPODAL_TOL):
            raise NonUniqueGeodesic("antipodal points on the sphere have no unique geodesic")

    def geodesic_point(self, p, q, t):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        self.ensure_unique_geodesic(p, q)
        theta = self.dist(p, q)
        small = theta < _SMALL_ANGLE
        sin = np.where(small, 1.0, np.sin(theta))
        a = np.where(small, 1.0 - t, np.sin((1.0 - t) * theta) / sin)
        b = np.where(small, t, np.sin(t * theta) / sin)
        out = a[..., None] * p + b[..., None] * q
        return out / np.linalg.norm(out, axis=-1, keepdims=True)

    def log(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        self.ensure_unique_geodesic(p, q)
        theta = self.dist(p, q)
        w = q - np.sum(p * q, axis=-1, keepdims=True) * p
        norm = np.linalg.norm(w, axis=-1)
        scale = np.where(norm > 0, theta / np.where(norm > 0, norm, 1.0), 0.0)
        return scale[..., None] * w

    def inner(self, p, u, v):
        return np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    def random_point(self, rng=None, size=None):
        rng = as_rng(rng)
        shape = (self.ambient_dim,) if size is None else (size, self.ambient_dim)
        g = rng.standard_normal(shape)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def identity_isometry(self) -> MatrixIsometry:
        return MatrixIsometry(np.eye(self.ambient_dim), kind="orthogonal")

    def random_isometry(self, rng=None) -> MatrixIsometry:
        rng = as_rng(rng)
        return MatrixIsometry(ortho_group.rvs(self.ambient_dim, random_state=rng), kind="orthogonal")

    def rotation_about_axis(self, axis: int, angle: float) -> MatrixIsometry:
        """Rotation by `angle` in the coordinate plane complementary to `axis` (S^2 only)."""
        if self.ambient_dim != 3:
            raise UnsupportedVariant("axis rotations are defined for S^2")
        if isinstance(axis, bool) or not isinstance(axis, (int, np.integer)) or not 0 <= axis < 3:
            raise InvalidIsometry(f"rotation axis must be a coordinate index 0..2, got {axis!r}")
        i, j = [k for k in range(3) if k != axis]
        m = np.eye(3)
        c, s = np.cos(angle), np.sin(angle)
        m[i, i], m[i, j], m[j, i], m[j, j] = c, -s, s, c
        return MatrixIsometry(m, kind="orthogonal")

    def fit_isometry(self, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        at, *_ = np.linalg.lstsq(xs, ys, rcond=None)
        unitary, _ = scipy.linalg.polar(at.T)
        g = MatrixIsometry(unitary, kind="orthogonal")
        residual = float(np.max(self.dist(g.apply(xs), ys)))
        return g, residual

    def to_json(self) -> dict:
        return {"sphere": {"dim": self.dim}}

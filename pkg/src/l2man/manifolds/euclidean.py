"""Flat R^d. Not a rigid target: it admits surjective dilations, and L2(grid, R)
is a Hilbert space with isometries that mix atoms."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import orthogonal_procrustes
from scipy.stats import ortho_group

from .base import Dilation, Manifold, as_rng
from .isometries import RigidMotion


def _random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    if dim == 1:
        return np.array([[rng.choice([-1.0, 1.0])]])
    return ortho_group.rvs(dim, random_state=rng)


@dataclass(frozen=True)
class Euclidean(Manifold):
    dim: int = 1

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"Euclidean dimension must be at least 1, got {self.dim}")

    @property
    def ambient_dim(self) -> int:
        return self.dim

    def point_defect(self, points):
        return np.zeros(np.shape(points)[:-1])

    def dist(self, p, q):
        return np.linalg.norm(np.asarray(p, dtype=float) - np.asarray(q, dtype=float), axis=-1)

    def geodesic_point(self, p, q, t):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return (1.0 - t) * p + t * q

    def log(self, p, q):
        return np.asarray(q, dtype=float) - np.asarray(p, dtype=float)

    def inner(self, p, u, v):
        return np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    def random_point(self, rng=None, size=None):
        rng = as_rng(rng)
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.standard_normal(shape)

    def identity_isometry(self) -> RigidMotion:
        return RigidMotion(np.eye(self.dim), np.zeros(self.dim))

    def random_isometry(self, rng=None) -> RigidMotion:
        rng = as_rng(rng)
        return RigidMotion(_random_orthogonal(self.dim, rng), rng.standard_normal(self.dim))

    def fit_isometry(self, xs, ys):
        """Centred orthogonal Procrustes: A from the centred clouds, b from the means."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        x_mean = xs.mean(axis=0)
        y_mean = ys.mean(axis=0)
        r, _ = orthogonal_procrustes(xs - x_mean, ys - y_mean)
        linear = r.T
        g = RigidMotion(linear, y_mean - linear @ x_mean)
        residual = float(np.max(self.dist(g.apply(xs), ys)))
        return g, residual

    def scaling_map(self, factor: float) -> Dilation:
        return Dilation(factor, self.dim)

    def to_json(self) -> dict:
        return {"euclidean": {"dim": self.dim}}

"""Riemannian products and constant rescalings of a backend.

A product point is the concatenation of its factor coordinates; `split` and
`join` convert. Products are never rigid targets: L2(Omega, X x Y) splits as
L2(Omega, X) x L2(Omega, Y), and identical factors can be interleaved.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidDilation
from .base import Dilation, Manifold, as_rng
from .isometries import ManifoldIsometry, ProductIsometry


@dataclass(frozen=True)
class Product(Manifold):
    factors: tuple[Manifold, ...]

    def __post_init__(self):
        if len(self.factors) < 2:
            raise ValueError("a product needs at least two factors")
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(f.ambient_dim for f in self.factors)

    @property
    def ambient_dim(self) -> int:
        return sum(self.sizes)

    def split(self, points) -> list[np.ndarray]:
        points = np.asarray(points, dtype=float)
        cuts = np.cumsum(self.sizes)[:-1]
        return np.split(points, cuts, axis=-1)

    def join(self, parts) -> np.ndarray:
        return np.concatenate([np.asarray(x, dtype=float) for x in parts], axis=-1)

    def point_defect(self, points):
        return np.max(
            np.stack([f.point_defect(x) for f, x in zip(self.factors, self.split(points))]), axis=0
        )

    def factor_dist2(self, p, q) -> np.ndarray:
        """Per-factor squared distances stacked on the last axis."""
        return np.stack(
            [f.dist2(a, b) for f, a, b in zip(self.factors, self.split(p), self.split(q))], axis=-1
        )

    def dist(self, p, q):
        return np.sqrt(np.sum(self.factor_dist2(p, q), axis=-1))

    def ensure_unique_geodesic(self, p, q) -> None:
        for f, a, b in zip(self.factors, self.split(p), self.split(q)):
            f.ensure_unique_geodesic(a, b)

    def geodesic_point(self, p, q, t):
        return self.join(
            f.geodesic_point(a, b, t) for f, a, b in zip(self.factors, self.split(p), self.split(q))
        )

    def log(self, p, q):
        return self.join(f.log(a, b) for f, a, b in zip(self.factors, self.split(p), self.split(q)))

    def inner(self, p, u, v):
        return sum(
            f.inner(a, x, y)
            for f, a, x, y in zip(self.factors, self.split(p), self.split(u), self.split(v))
        )

    def random_point(self, rng=None, size=None):
        rng = as_rng(rng)
        return self.join(f.random_point(rng, size) for f in self.factors)

    def identity_isometry(self) -> ProductIsometry:
        return ProductIsometry(tuple(f.identity_isometry() for f in self.factors), self.sizes)

    def random_isometry(self, rng=None) -> ProductIsometry:
        rng = as_rng(rng)
        return ProductIsometry(tuple(f.random_isometry(rng) for f in self.factors), self.sizes)

    def product_isometry(self, factors: list[ManifoldIsometry]) -> ProductIsometry:
        return ProductIsometry(tuple(factors), self.sizes)

    def fit_isometry(self, xs, ys):
        """Factor-wise fit; the residual is the product distance of the fit."""
        fits = [f.fit_isometry(a, b) for f, a, b in zip(self.factors, self.split(xs), self.split(ys))]
        g = ProductIsometry(tuple(fit[0] for fit in fits), self.sizes)
        residual = float(np.max(self.dist(g.apply(xs), ys)))
        return g, residual

    def to_json(self) -> dict:
        return {"product": [f.to_json() for f in self.factors]}


@dataclass(frozen=True)
class Scaled(Manifold):
    """The metric c^2 g of `base`: distances scale by c, the isometry group is unchanged."""

    c: float
    base: Manifold

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidDilation(f"scale factor must be positive, got {self.c}")

    @property
    def ambient_dim(self) -> int:
        return self.base.ambient_dim

    @property
    def is_rigid(self) -> bool:
        return self.base.is_rigid

    def point_defect(self, points):
        return self.base.point_defect(points)

    def dist(self, p, q):
        return self.c * self.base.dist(p, q)

    def ensure_unique_geodesic(self, p, q) -> None:
        self.base.ensure_unique_geodesic(p, q)

    def geodesic_point(self, p, q, t):
        return self.base.geodesic_point(p, q, t)

    def log(self, p, q):
        return self.base.log(p, q)

    def inner(self, p, u, v):
        return self.c * self.c * self.base.inner(p, u, v)

    def random_point(self, rng=None, size=None):
        return self.base.random_point(rng, size)

    def identity_isometry(self) -> ManifoldIsometry:
        return self.base.identity_isometry()

    def random_isometry(self, rng=None) -> ManifoldIsometry:
        return self.base.random_isometry(rng)

    def fit_isometry(self, xs, ys):
        g, residual = self.base.fit_isometry(xs, ys)
        return g, self.c * residual

    def scaling_map(self, factor: float) -> Dilation:
        return self.base.scaling_map(factor)

    def to_json(self) -> dict:
        return {"scaled": {"c": self.c, "of": self.base.to_json()}}


def power(base: Manifold, k: int) -> Product:
    """X^k."""
    return Product(tuple([base] * k))


def sqrt_scaled(base: Manifold, k: int) -> Scaled:
    """sqrt(k) X."""
    return Scaled(math.sqrt(k), base)

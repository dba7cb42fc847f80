"""Manifold backends: one Riemannian target per variant.

L2 code owns the atoms and weights; a Manifold owns the pointwise geometry and
the isometry group of one target. See base.Manifold.
"""

import logging

import numpy as np

from ..errors import ConfigParse, UnsupportedVariant
from .base import Dilation, Manifold, as_rng, law_of_cosines_angle
from .euclidean import Euclidean
from .hyperbolic import Hyperbolic, lorentz_inner
from .isometries import (
    ManifoldIsometry,
    MatrixIsometry,
    ProductIsometry,
    RigidMotion,
    apply_isometry,
    compose_isometries,
    invert_isometry,
)
from .product import Product, Scaled, power, sqrt_scaled
from .sphere import Sphere

logger = logging.getLogger(__name__)

__all__ = [
    "Dilation",
    "Euclidean",
    "Hyperbolic",
    "Manifold",
    "ManifoldIsometry",
    "MatrixIsometry",
    "Product",
    "ProductIsometry",
    "RigidMotion",
    "Scaled",
    "Sphere",
    "apply_isometry",
    "comparison_angle",
    "compose_isometries",
    "dist",
    "fit_isometry",
    "geodesic_point",
    "invert_isometry",
    "isometry_from_json",
    "law_of_cosines_angle",
    "lorentz_inner",
    "manifold_from_json",
    "power",
    "random_isometry",
    "random_point",
    "scaling_map",
    "sqrt_scaled",
]


def _dim(body, variant: str, default: int) -> int:
    if body is None:
        return default
    if not isinstance(body, dict):
        raise ConfigParse(f"{variant} spec must be an object", field=variant)
    try:
        return int(body.get("dim", default))
    except (TypeError, ValueError) as e:
        raise ConfigParse(f"{variant} dim must be an integer: {e}", field=f"{variant}.dim") from e


def manifold_from_json(spec) -> Manifold:
    """Build the backend for a manifold spec.

    Accepted shapes: {"sphere": {"dim": d}}, {"hyperbolic": {"dim": d}},
    {"euclidean": {"dim": d}}, {"product": [spec, ...]} and
    {"scaled": {"c": c, "of": spec}}. Dimension and scale violations surface
    as ConfigParse with the offending field.
    """
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigParse(f"manifold spec must be an object with exactly one variant key, got {spec!r}", field="manifold")
    (variant, body), = spec.items()
    try:
        if variant == "sphere":
            return Sphere(_dim(body, variant, 2))
        if variant == "hyperbolic":
            return Hyperbolic(_dim(body, variant, 2))
        if variant == "euclidean":
            return Euclidean(_dim(body, variant, 1))
        if variant == "product":
            if not isinstance(body, list):
                raise ConfigParse("product spec must be a list of factor specs", field="product")
            return Product(tuple(manifold_from_json(s) for s in body))
        if variant == "scaled":
            if not isinstance(body, dict) or "of" not in body or "c" not in body:
                raise ConfigParse('scaled spec needs "c" and "of"', field="scaled")
            return Scaled(float(body["c"]), manifold_from_json(body["of"]))
    except ValueError as e:
        raise ConfigParse(str(e), field=variant) from e
    raise ConfigParse(f"unknown manifold variant '{variant}'", field="manifold")


def isometry_from_json(manifold: Manifold, obj) -> ManifoldIsometry:
    """Inverse of ManifoldIsometry.to_json for the given target."""
    if isinstance(manifold, Scaled):
        return isometry_from_json(manifold.base, obj)
    if isinstance(manifold, Product):
        return manifold.product_isometry(
            [isometry_from_json(f, o) for f, o in zip(manifold.factors, obj)]
        )
    if isinstance(manifold, Euclidean):
        return RigidMotion(np.asarray(obj["A"], dtype=float), np.asarray(obj["b"], dtype=float))
    if isinstance(manifold, Hyperbolic):
        return MatrixIsometry(np.asarray(obj, dtype=float), kind="lorentz")
    if isinstance(manifold, Sphere):
        return MatrixIsometry(np.asarray(obj, dtype=float), kind="orthogonal")
    raise UnsupportedVariant(f"no isometry encoding for {manifold}")


# -- module-level operations -------------------------------------------------


def dist(manifold: Manifold, p, q) -> float:
    p = manifold.validate_points(p)
    q = manifold.validate_points(q)
    return float(manifold.dist(p, q))


def geodesic_point(manifold: Manifold, p, q, t: float) -> np.ndarray:
    p = manifold.validate_points(p)
    q = manifold.validate_points(q)
    manifold.ensure_unique_geodesic(p, q)
    return manifold.geodesic_point(p, q, t)


def comparison_angle(manifold: Manifold, x, y, z) -> float:
    return manifold.comparison_angle(
        manifold.validate_points(x), manifold.validate_points(y), manifold.validate_points(z)
    )


def random_point(manifold: Manifold, seed=None) -> np.ndarray:
    return manifold.random_point(as_rng(seed))


def random_isometry(manifold: Manifold, seed=None) -> ManifoldIsometry:
    return manifold.random_isometry(as_rng(seed))


def fit_isometry(manifold: Manifold, xs, ys) -> tuple[ManifoldIsometry, float]:
    return manifold.fit_isometry(xs, ys)


def scaling_map(manifold: Manifold, factor: float) -> Dilation:
    return manifold.scaling_map(factor)

"""The Manifold abstraction.

Split of responsibility:

    l2_space / isometry_group           Manifold (this ABC)
    ─────────────────────────           ───────────────────
    owns the atoms and their weights    owns one chart and its metric:
    integrates squared distances          dist, geodesic_point, log, inner
    over atoms, builds L2 geodesics     owns the isometry group:
    from per-atom geodesics               identity, random element, fit from
                                          point samples, group-identity check

Points are plain float arrays in the ambient chart coordinates. Every metric
method broadcasts over leading axes, so a whole L2 function (an (n, k) array,
one row per atom) goes through one call.

The variants are frozen dataclasses, so a ManifoldSpec and the backend that
computes on it are the same object, and equal specs compare equal.
"""

import math
from abc import ABC, abstractmethod

import numpy as np

from ..errors import DegenerateVertex, InvalidDilation, InvalidIsometry, InvalidPoint, UnsupportedVariant
from .isometries import GROUP_TOL, ManifoldIsometry

# Chart invariants (|x| = 1, <x,x>_L = -1) are checked to this tolerance.
POINT_TOL = 1e-10


def as_rng(seed) -> np.random.Generator:
    """Accept a Generator, an integer seed or None."""
    return np.random.default_rng(seed)


def clamp_cos(value):
    return np.clip(value, -1.0, 1.0)


class Manifold(ABC):
    """A Riemannian manifold backend."""

    @property
    @abstractmethod
    def ambient_dim(self) -> int:
        """Length of a coordinate vector."""

    @property
    def is_rigid(self) -> bool:
        """Whether the target has dimension >= 2 and irreducible universal cover.

        Only rigid targets are guaranteed to have every L2 isometry of the
        semidirect form; the others are kept as counterexample foils.
        """
        return False

    @abstractmethod
    def point_defect(self, points: np.ndarray) -> np.ndarray:
        """Per-point violation of the chart invariant (0 for a valid point)."""

    def validate_points(self, points, tol: float = POINT_TOL) -> np.ndarray:
        """Return points as a float array or raise InvalidPoint."""
        arr = np.asarray(points, dtype=float)
        if arr.shape[-1:] != (self.ambient_dim,):
            raise InvalidPoint(f"{self} expects coordinates of length {self.ambient_dim}, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidPoint(f"non-finite coordinates for {self}")
        defect = np.max(np.atleast_1d(self.point_defect(arr)))
        if defect > tol:
            raise InvalidPoint(f"point off {self} by {defect:.3e}")
        return arr

    @abstractmethod
    def dist(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Riemannian distance, broadcasting over leading axes."""

    def dist2(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        return self.dist(p, q) ** 2

    def ensure_unique_geodesic(self, p: np.ndarray, q: np.ndarray) -> None:
        """Raise NonUniqueGeodesic when some pair has several minimizing geodesics."""

    @abstractmethod
    def geodesic_point(self, p: np.ndarray, q: np.ndarray, t: float) -> np.ndarray:
        """The point at parameter t in [0, 1] on the minimizing geodesic from p to q."""

    @abstractmethod
    def log(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Initial velocity at p of the geodesic reaching q at time 1."""

    @abstractmethod
    def inner(self, p: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Riemannian inner product of tangent vectors at p."""

    @abstractmethod
    def random_point(self, rng=None, size: int | None = None) -> np.ndarray:
        """A random point (or `size` of them, stacked); deterministic given the seed."""

    @abstractmethod
    def identity_isometry(self) -> ManifoldIsometry:
        """The identity element of Isom(M)."""

    @abstractmethod
    def random_isometry(self, rng=None) -> ManifoldIsometry:
        """A random element of Isom(M); deterministic given the seed."""

    @abstractmethod
    def fit_isometry(self, xs: np.ndarray, ys: np.ndarray) -> tuple[ManifoldIsometry, float]:
        """Fit g with g(xs[k]) ~ ys[k], projected onto the group.

        Returns the element and the max distance residual over the samples.
        """

    @abstractmethod
    def to_json(self) -> dict:
        """Manifold spec JSON, e.g. {"sphere": {"dim": 2}}."""

    # -- shared geometry -------------------------------------------------------

    def check_isometry(self, g: ManifoldIsometry, tol: float = GROUP_TOL) -> None:
        """Raise InvalidIsometry unless g satisfies its group identity within tol."""
        defect = g.group_defect()
        if defect > tol:
            raise InvalidIsometry(f"{g.kind} element violates its group identity by {defect:.3e}")

    def comparison_angle(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> float:
        """Euclidean comparison angle at x of the triangle (x, y, z), in [0, pi]."""
        dxy = float(self.dist(x, y))
        dxz = float(self.dist(x, z))
        if dxy == 0.0 or dxz == 0.0:
            raise DegenerateVertex("comparison angle needs y != x and z != x")
        dyz = float(self.dist(y, z))
        return law_of_cosines_angle(dxy, dxz, dyz)

    def riemannian_angle(self, p: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Angle between tangent vectors u, v at p."""
        uv = self.inner(p, u, v)
        uu = self.inner(p, u, u)
        vv = self.inner(p, v, v)
        return np.arccos(clamp_cos(uv / np.sqrt(uu * vv)))

    def scaling_map(self, factor: float) -> "Dilation":
        """A surjective dilation x -> factor * x. Only Euclidean targets admit one."""
        raise UnsupportedVariant(f"{self} admits no surjective dilation; only Euclidean targets do")


def law_of_cosines_angle(a: float, b: float, c: float) -> float:
    """Angle opposite side c in a triangle with sides a, b adjacent to it."""
    cos = (a * a + b * b - c * c) / (2.0 * a * b)
    return math.acos(min(1.0, max(-1.0, cos)))


class Dilation:
    """x -> factor * x on R^d; distances scale by `factor`."""

    def __init__(self, factor: float, dim: int):
        if not (math.isfinite(factor) and factor > 0):
            raise InvalidDilation(f"dilation factor must be positive, got {factor}")
        self.factor = float(factor)
        self.dim = dim

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.factor * np.asarray(points, dtype=float)

    def inverse(self) -> "Dilation":
        return Dilation(1.0 / self.factor, self.dim)

    @property
    def is_isometry(self) -> bool:
        return self.factor == 1.0

"""Isometry elements of the manifold backends.

Each element knows how to act on points (broadcasting over leading axes of a
coordinate array), compose with an element of the same kind, and invert.
Mixing kinds raises VariantMismatch. Elements hold numpy arrays, so equality is
numeric: use `allclose`.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import VariantMismatch

# Defining identities (A^T A = I, L^T J L = J) are checked to this tolerance.
GROUP_TOL = 1e-10


def minkowski_form(size: int) -> np.ndarray:
    """J = diag(-1, 1, ..., 1)."""
    j = np.eye(size)
    j[0, 0] = -1.0
    return j


class ManifoldIsometry:
    """Common interface; concrete kinds below."""

    kind: str = ""

    def apply(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def compose(self, inner: "ManifoldIsometry") -> "ManifoldIsometry":
        """self o inner: apply `inner` first."""
        raise NotImplementedError

    def inverse(self) -> "ManifoldIsometry":
        raise NotImplementedError

    def allclose(self, other: "ManifoldIsometry", tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError

    def _require_same(self, other: "ManifoldIsometry") -> None:
        if type(other) is not type(self) or other.kind != self.kind:
            raise VariantMismatch(f"cannot combine a {self.kind} isometry with a {other.kind} isometry")


@dataclass(frozen=True, eq=False)
class MatrixIsometry(ManifoldIsometry):
    """x -> L x for an orthogonal matrix (sphere) or a Lorentz matrix (hyperboloid)."""

    matrix: np.ndarray
    kind: str = "orthogonal"

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.matrix.shape[0]:
            raise VariantMismatch(
                f"{self.kind} isometry of size {self.matrix.shape[0]} applied to points of size {points.shape[-1]}"
            )
        return points @ self.matrix.T

    def compose(self, inner: ManifoldIsometry) -> "MatrixIsometry":
        self._require_same(inner)
        return MatrixIsometry(self.matrix @ inner.matrix, kind=self.kind)

    def inverse(self) -> "MatrixIsometry":
        if self.kind == "lorentz":
            j = minkowski_form(self.matrix.shape[0])
            return MatrixIsometry(j @ self.matrix.T @ j, kind=self.kind)
        return MatrixIsometry(self.matrix.T.copy(), kind=self.kind)

    def group_defect(self) -> float:
        """max |A^T A - I| or max |L^T J L - J|."""
        size = self.matrix.shape[0]
        if self.kind == "lorentz":
            j = minkowski_form(size)
            return float(np.max(np.abs(self.matrix.T @ j @ self.matrix - j)))
        return float(np.max(np.abs(self.matrix.T @ self.matrix - np.eye(size))))

    def allclose(self, other: ManifoldIsometry, tol: float = 1e-9) -> bool:
        self._require_same(other)
        return other.matrix.shape == self.matrix.shape and bool(
            np.max(np.abs(self.matrix - other.matrix)) <= tol
        )

    def to_json(self) -> list[list[float]]:
        return self.matrix.tolist()


@dataclass(frozen=True, eq=False)
class RigidMotion(ManifoldIsometry):
    """x -> A x + b with A orthogonal."""

    linear: np.ndarray
    shift: np.ndarray
    kind: str = "motion"

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.shift.shape[0]:
            raise VariantMismatch(
                f"rigid motion of R^{self.shift.shape[0]} applied to points of size {points.shape[-1]}"
            )
        return points @ self.linear.T + self.shift

    def compose(self, inner: ManifoldIsometry) -> "RigidMotion":
        self._require_same(inner)
        return RigidMotion(self.linear @ inner.linear, self.linear @ inner.shift + self.shift)

    def inverse(self) -> "RigidMotion":
        return RigidMotion(self.linear.T.copy(), -(self.linear.T @ self.shift))

    def group_defect(self) -> float:
        size = self.linear.shape[0]
        return float(np.max(np.abs(self.linear.T @ self.linear - np.eye(size))))

    def allclose(self, other: ManifoldIsometry, tol: float = 1e-9) -> bool:
        self._require_same(other)
        return bool(
            np.max(np.abs(self.linear - other.linear)) <= tol
            and np.max(np.abs(self.shift - other.shift)) <= tol
        )

    def to_json(self) -> dict:
        return {"A": self.linear.tolist(), "b": self.shift.tolist()}


@dataclass(frozen=True, eq=False)
class ProductIsometry(ManifoldIsometry):
    """Factor-wise isometries of a product; `sizes` are the factor coordinate widths."""

    factors: tuple[ManifoldIsometry, ...]
    sizes: tuple[int, ...]
    kind: str = "product"

    def _split(self, points: np.ndarray) -> list[np.ndarray]:
        if points.shape[-1] != sum(self.sizes):
            raise VariantMismatch(
                f"product isometry of width {sum(self.sizes)} applied to points of size {points.shape[-1]}"
            )
        cuts = np.cumsum(self.sizes)[:-1]
        return np.split(points, cuts, axis=-1)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        parts = self._split(points)
        return np.concatenate([g.apply(x) for g, x in zip(self.factors, parts)], axis=-1)

    def compose(self, inner: ManifoldIsometry) -> "ProductIsometry":
        self._require_same(inner)
        if inner.sizes != self.sizes:
            raise VariantMismatch(f"product isometries over factor widths {self.sizes} and {inner.sizes}")
        return ProductIsometry(
            tuple(g.compose(h) for g, h in zip(self.factors, inner.factors)), self.sizes
        )

    def inverse(self) -> "ProductIsometry":
        return ProductIsometry(tuple(g.inverse() for g in self.factors), self.sizes)

    def group_defect(self) -> float:
        return max(g.group_defect() for g in self.factors)

    def allclose(self, other: ManifoldIsometry, tol: float = 1e-9) -> bool:
        self._require_same(other)
        return other.sizes == self.sizes and all(
            g.allclose(h, tol) for g, h in zip(self.factors, other.factors)
        )

    def to_json(self) -> list:
        return [g.to_json() for g in self.factors]


def apply_isometry(g: ManifoldIsometry, p: np.ndarray) -> np.ndarray:
    return g.apply(p)


def compose_isometries(g: ManifoldIsometry, h: ManifoldIsometry) -> ManifoldIsometry:
    """g o h: apply(compose(g, h), p) == apply(g, apply(h, p))."""
    return g.compose(h)


def invert_isometry(g: ManifoldIsometry) -> ManifoldIsometry:
    return g.inverse()

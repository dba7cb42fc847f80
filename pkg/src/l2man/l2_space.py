"""The metric space L2(Omega, M) over a finite measure space.

An L2Function stores one manifold point per atom as an (n, k) coordinate
array. The metric is

    d(f, g)^2 = sum_i p_i dist_M(f_i, g_i)^2

and geodesics are assembled atom by atom from backend geodesics, with the
per-atom relative speed alpha normalized by sum_i p_i alpha_i^2 = 1.
"""

import csv
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ArityMismatch,
    EmptyOrFullSubset,
    IdenticalEndpoints,
    LengthMismatch,
    ManifoldMismatch,
    MismatchedBasepoint,
    NotAProduct,
    OutOfRange,
    SpaceMismatch,
)
from .manifolds import Manifold, Product, as_rng, law_of_cosines_angle, manifold_from_json
from .manifolds.base import clamp_cos
from .measure_space import (
    DensityFn,
    FiniteMeasureSpace,
    Partition,
    normalize_space,
    prob_space_from_json,
    restrict_space,
)

logger = logging.getLogger(__name__)

# Tolerance used when deciding whether two geodesics share a basepoint.
BASEPOINT_TOL = 1e-12
# Halving ladder from 1e-1 down to below 1e-3.
DEFAULT_SCALES = tuple(0.1 / 2**k for k in range(8))


@dataclass(frozen=True, eq=False)
class L2Function:
    """One point of `manifold` per atom of `space`.

    Constructing directly skips validation; use make_function for user input.
    """

    space: FiniteMeasureSpace
    manifold: Manifold
    points: np.ndarray

    @property
    def n(self) -> int:
        return self.space.n

    def allclose(self, other: "L2Function", tol: float = 1e-9) -> bool:
        return (
            self.space == other.space
            and self.manifold == other.manifold
            and bool(np.max(np.abs(self.points - other.points)) <= tol)
        )

    def to_json(self) -> dict:
        return {
            "space": self.space.to_json(),
            "manifold": self.manifold.to_json(),
            "points": self.points.tolist(),
        }


def make_function(space: FiniteMeasureSpace, manifold: Manifold, points) -> L2Function:
    """Validated L2Function; LengthMismatch or InvalidPoint on bad input."""
    arr = manifold.validate_points(np.atleast_2d(np.asarray(points, dtype=float)))
    if arr.shape[0] != space.n:
        raise LengthMismatch(f"{arr.shape[0]} points given for a space with {space.n} atoms")
    return L2Function(space, manifold, arr)


def function_from_json(obj: dict) -> L2Function:
    space = prob_space_from_json(obj["space"])
    return make_function(space, manifold_from_json(obj["manifold"]), obj["points"])


def constant_function(space: FiniteMeasureSpace, manifold: Manifold, x) -> L2Function:
    x = manifold.validate_points(x)
    return L2Function(space, manifold, np.tile(x, (space.n, 1)))


def random_function(space: FiniteMeasureSpace, manifold: Manifold, rng=None) -> L2Function:
    return L2Function(space, manifold, manifold.random_point(as_rng(rng), size=space.n))


def with_atom(f: L2Function, atom: int, x) -> L2Function:
    """f with the value at `atom` replaced by x."""
    points = f.points.copy()
    points[atom] = x
    return L2Function(f.space, f.manifold, points)


def _require_compatible(f: L2Function, g: L2Function) -> None:
    if f.space != g.space:
        raise SpaceMismatch("functions live over different measure spaces")
    if f.manifold != g.manifold:
        raise ManifoldMismatch(f"functions take values in {f.manifold} and {g.manifold}")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def atom_dist2(f: L2Function, g: L2Function) -> np.ndarray:
    """Per-atom squared distances dist_M(f_i, g_i)^2."""
    _require_compatible(f, g)
    return np.asarray(f.manifold.dist2(f.points, g.points), dtype=float)


def d_l2(f: L2Function, g: L2Function) -> float:
    d2 = atom_dist2(f, g)
    return math.sqrt(math.fsum(f.space.p * d2))


def d_eta(eta: DensityFn, f: L2Function, g: L2Function) -> float:
    """sqrt(sum_i eta_i p_i d^2(f_i, g_i)); a pseudo-metric."""
    d2 = atom_dist2(f, g)
    if eta.n != f.n:
        raise SpaceMismatch(f"density has {eta.n} values, space has {f.n} atoms")
    return math.sqrt(math.fsum(eta.array * f.space.p * d2))


# ---------------------------------------------------------------------------
# Geodesics
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class L2Geodesic:
    """Endpoints, per-atom speed density alpha and length d(f, g)."""

    f: L2Function
    g: L2Function
    alpha: np.ndarray
    length: float

    def normalization_defect(self) -> float:
        """|sum_i p_i alpha_i^2 - 1|."""
        return abs(math.fsum(self.f.space.p * self.alpha**2) - 1.0)

    def reversed(self) -> "L2Geodesic":
        return L2Geodesic(self.g, self.f, self.alpha, self.length)

    def to_json(self) -> dict:
        return {
            "f": self.f.to_json(),
            "g": self.g.to_json(),
            "alpha": self.alpha.tolist(),
            "length": self.length,
        }


def geodesic(f: L2Function, g: L2Function) -> L2Geodesic:
    """The L2 geodesic from f to g built from the per-atom minimizing geodesics.

    Raises IdenticalEndpoints for f == g and NonUniqueGeodesic when some atom
    pair is antipodal on a sphere (no branch is chosen).
    """
    d2 = atom_dist2(f, g)
    length = math.sqrt(math.fsum(f.space.p * d2))
    if length == 0.0:
        raise IdenticalEndpoints("a geodesic needs distinct endpoints")
    f.manifold.ensure_unique_geodesic(f.points, g.points)
    alpha = np.sqrt(d2) / length
    return L2Geodesic(f, g, alpha, length)


def eval_geodesic(sigma: L2Geodesic, t: float) -> L2Function:
    if not 0.0 <= t <= 1.0:
        raise OutOfRange(f"geodesic parameter {t} outside [0, 1]")
    if t == 0.0:
        return sigma.f
    if t == 1.0:
        return sigma.g
    f = sigma.f
    return L2Function(f.space, f.manifold, f.manifold.geodesic_point(f.points, sigma.g.points, t))


def _require_basepoint(f: L2Function, *geodesics: L2Geodesic) -> None:
    for sigma in geodesics:
        if not (sigma.f.space == f.space and sigma.f.manifold == f.manifold):
            raise MismatchedBasepoint("geodesic lives in a different L2 space")
        if np.max(np.abs(sigma.f.points - f.points)) > BASEPOINT_TOL:
            raise MismatchedBasepoint("geodesics do not issue from the same function")


# ---------------------------------------------------------------------------
# Angles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AngleTraceRow:
    scale: float
    comparison_angle: float
    # Change from the previous, larger scale; None on the first row.
    diff: float | None


@dataclass(frozen=True)
class AngleEstimate:
    angle: float
    trace: tuple[AngleTraceRow, ...]
    extrapolated: float

    @property
    def diffs(self) -> list[float]:
        return [abs(row.diff) for row in self.trace if row.diff is not None]


def l2_comparison_angle(f: L2Function, y: L2Function, z: L2Function) -> float:
    """Euclidean comparison angle at f of the L2 triangle (f, y, z)."""
    return law_of_cosines_angle(d_l2(f, y), d_l2(f, z), d_l2(y, z))


def alexandrov_angle_numeric(
    f: L2Function,
    s1: L2Geodesic,
    s2: L2Geodesic,
    scales: Sequence[float] = DEFAULT_SCALES,
) -> AngleEstimate:
    """Comparison angles at f between s1(t) and s2(t) for each scale t.

    The error of the comparison angle is O(t^2) on smooth targets, so the
    last two rows give a Richardson step for `extrapolated`.
    """
    _require_basepoint(f, s1, s2)
    scales = [float(t) for t in scales]
    if not scales:
        raise OutOfRange("at least one scale is required")
    if any(not 0.0 < t <= 1.0 for t in scales) or any(a <= b for a, b in zip(scales, scales[1:])):
        raise OutOfRange(f"scales must lie in (0, 1] and decrease strictly, got {scales}")

    rows: list[AngleTraceRow] = []
    prev = None
    for t in scales:
        angle = l2_comparison_angle(f, eval_geodesic(s1, t), eval_geodesic(s2, t))
        rows.append(AngleTraceRow(t, angle, None if prev is None else angle - prev))
        prev = angle

    extrapolated = rows[-1].comparison_angle
    if len(rows) >= 2:
        t0, t1 = rows[-2].scale, rows[-1].scale
        a0, a1 = rows[-2].comparison_angle, rows[-1].comparison_angle
        extrapolated = a1 + (a1 - a0) * t1 * t1 / (t0 * t0 - t1 * t1)
        extrapolated = min(math.pi, max(0.0, extrapolated))
    logger.debug(f"numeric angle: last {rows[-1].comparison_angle:.6g}, extrapolated {extrapolated:.6g}")
    return AngleEstimate(rows[-1].comparison_angle, tuple(rows), extrapolated)


def _angle_terms(s1: L2Geodesic, s2: L2Geodesic) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mask of atoms moved by both geodesics, and the log vectors u, v there."""
    f = s1.f
    moving = (s1.alpha > 0) & (s2.alpha > 0)
    base = f.points[moving]
    u = f.manifold.log(base, s1.g.points[moving])
    v = f.manifold.log(base, s2.g.points[moving])
    return moving, u, v


def alexandrov_angle_analytic(s1: L2Geodesic, s2: L2Geodesic) -> float:
    """arccos(sum_i p_i alpha1_i alpha2_i cos theta_i); atoms at rest contribute 0."""
    _require_basepoint(s1.f, s2)
    f = s1.f
    moving, u, v = _angle_terms(s1, s2)
    if not np.any(moving):
        return math.pi / 2
    theta = f.manifold.riemannian_angle(f.points[moving], u, v)
    terms = f.space.p[moving] * s1.alpha[moving] * s2.alpha[moving] * np.cos(theta)
    return math.acos(float(clamp_cos(math.fsum(terms))))


def angle_cosine_terms(s1: L2Geodesic, s2: L2Geodesic) -> np.ndarray:
    """Per-factor contributions to cos of the analytic angle over a product target.

    Entry k is sum_i p_i <u_i^k, v_i^k> / (len1 len2) where u^k, v^k are the
    factor-k parts of the log vectors; the entries sum to the cosine.
    """
    _require_basepoint(s1.f, s2)
    f = s1.f
    if not isinstance(f.manifold, Product):
        raise NotAProduct(f"{f.manifold} is not a product target")
    moving, u, v = _angle_terms(s1, s2)
    base = f.manifold.split(f.points[moving])
    weights = f.space.p[moving] / (s1.length * s2.length)
    return np.array(
        [
            math.fsum(weights * factor.inner(b, x, y))
            for factor, b, x, y in zip(f.manifold.factors, base, f.manifold.split(u), f.manifold.split(v))
        ]
    )


def write_angle_trace_csv(path: str | Path, estimate: AngleEstimate, analytic: float) -> None:
    """Columns: scale, comparison_angle, analytic_angle, diff."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scale", "comparison_angle", "analytic_angle", "diff"])
        for row in estimate.trace:
            writer.writerow(
                [repr(row.scale), repr(row.comparison_angle), repr(analytic), "" if row.diff is None else repr(row.diff)]
            )


# ---------------------------------------------------------------------------
# Simple functions and splittings
# ---------------------------------------------------------------------------


def simple_embed(space: FiniteMeasureSpace, manifold: Manifold, part: Partition, xs: Sequence) -> L2Function:
    """f_x with f(w) = xs[b] on block b of `part`."""
    if part.n != space.n:
        raise SpaceMismatch(f"partition of {part.n} atoms over a space of {space.n}")
    if len(xs) != len(part.blocks):
        raise ArityMismatch(f"{len(xs)} points for {len(part.blocks)} blocks")
    xs = manifold.validate_points(np.asarray(xs, dtype=float))
    points = np.empty((space.n, manifold.ambient_dim))
    for b, block in enumerate(part.blocks):
        points[list(block)] = xs[b]
    return L2Function(space, manifold, points)


def _split_atoms(n: int, atoms: Iterable[int]) -> tuple[list[int], list[int]]:
    chosen = sorted(set(atoms))
    if any(i < 0 or i >= n for i in chosen):
        raise LengthMismatch(f"atom indices {chosen} out of range for {n} atoms")
    rest = [i for i in range(n) if i not in set(chosen)]
    if not chosen or not rest:
        raise EmptyOrFullSubset("a splitting set must be a nonempty proper subset")
    return chosen, rest


def restrict(f: L2Function, atoms: Iterable[int]) -> L2Function:
    """f on the sub-space `atoms`, which keeps the ambient weights."""
    idx = sorted(set(atoms))
    return L2Function(restrict_space(f.space, idx), f.manifold, f.points[idx])


def restrict_split(f: L2Function, atoms: Iterable[int]) -> tuple[L2Function, L2Function]:
    """(f|_A, f|_A^c); the sub-spaces keep the unnormalized ambient weights."""
    chosen, rest = _split_atoms(f.n, atoms)
    return restrict(f, chosen), restrict(f, rest)


def glue_split(space: FiniteMeasureSpace, atoms: Iterable[int], on_a: L2Function, on_rest: L2Function) -> L2Function:
    """Inverse of restrict_split."""
    chosen, rest = _split_atoms(space.n, atoms)
    if on_a.manifold != on_rest.manifold:
        raise ManifoldMismatch("the two pieces take values in different manifolds")
    if on_a.n != len(chosen) or on_rest.n != len(rest):
        raise LengthMismatch("piece sizes do not match the splitting set")
    points = np.empty((space.n, on_a.manifold.ambient_dim))
    points[chosen] = on_a.points
    points[rest] = on_rest.points
    return L2Function(space, on_a.manifold, points)


def normalized_restriction_distance(f: L2Function, g: L2Function, atoms: Iterable[int]) -> float:
    """Distance of f|_A and g|_A over A with weights renormalized to mass one.

    Equals d_A(f|_A, g|_A) / sqrt(mu(A)).
    """
    idx = sorted(set(atoms))
    fa, ga = restrict(f, idx), restrict(g, idx)
    space = normalize_space(fa.space)
    return d_l2(L2Function(space, fa.manifold, fa.points), L2Function(space, ga.manifold, ga.points))


def product_split(f: L2Function) -> tuple[L2Function, ...]:
    """(f_1, ..., f_k) for a function into M_1 x ... x M_k."""
    if not isinstance(f.manifold, Product):
        raise NotAProduct(f"{f.manifold} is not a product target")
    return tuple(
        L2Function(f.space, factor, part)
        for factor, part in zip(f.manifold.factors, f.manifold.split(f.points))
    )


def product_glue(parts: Sequence[L2Function]) -> L2Function:
    """Inverse of product_split."""
    if len(parts) < 2:
        raise NotAProduct("gluing needs at least two components")
    space = parts[0].space
    if any(p.space != space for p in parts):
        raise SpaceMismatch("components live over different measure spaces")
    manifold = Product(tuple(p.manifold for p in parts))
    return L2Function(space, manifold, manifold.join(p.points for p in parts))

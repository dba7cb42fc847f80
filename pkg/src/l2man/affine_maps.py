"""Affine maps out of L2(Omega, M), seen only through distances.

A Lipschitz affine map F into some metric space Y is characterized by a
nonnegative density eta with

    d_Y(F f, F g)^2 = sum_i eta_i p_i d^2(f_i, g_i).

Y is never constructed: an AffineOracle is a forward map to opaque tokens plus
the distance between tokens. The density is read off atom by atom by moving a
constant function at a single atom.
"""

import logging
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import (
    DegenerateProbe,
    InconsistentConstants,
    InsufficientProbes,
    NotAProduct,
    NotAPseudoMetric,
    SpaceMismatch,
    UnsupportedVariant,
)
from .l2_space import (
    L2Function,
    constant_function,
    d_eta,
    d_l2,
    product_split,
    random_function,
    restrict,
    simple_embed,
    with_atom,
)
from .manifolds import Euclidean, Manifold, Product, as_rng
from .measure_space import DensityFn, FiniteMeasureSpace, make_density, make_partition

logger = logging.getLogger(__name__)

# Probe-independence deviation above this marks a map as not affine.
NOT_AFFINE_THRESHOLD = 1e-6
# Slack on eta_i <= L^2.
LIPSCHITZ_SLACK = 1e-6
LIPSCHITZ_PAIRS = 500
# Mixed-identity residual above this means the factor constants do not explain F.
INCONSISTENT_TOL = 1e-6
# eta and eta-bar of a splitting must be complementary indicators to this tolerance.
SPLITTING_TOL = 1e-9
# Slack on d_Y(y, y) = 0, symmetry and the triangle inequality over sampled tokens.
PSEUDOMETRIC_TOL = 1e-9


@dataclass
class AffineOracle:
    forward: Callable[[L2Function], Any]
    y_dist: Callable[[Any, Any], float]
    space: FiniteMeasureSpace
    manifold: Manifold
    name: str = "affine"

    def __call__(self, f: L2Function) -> Any:
        return self.forward(f)

    def distance(self, f: L2Function, g: L2Function) -> float:
        return float(self.y_dist(self.forward(f), self.forward(g)))

    def validate(self, rng=None, samples: int = 10, tol: float = PSEUDOMETRIC_TOL) -> float:
        """Worst pseudo-metric defect of y_dist on the tokens of random functions.

        Checks d(y, y) = 0, d >= 0, symmetry and d(a, c) <= d(a, b) + d(b, c)
        over all triples of `samples` tokens; NotAPseudoMetric beyond tol.
        """
        rng = as_rng(rng)
        tokens = [self(random_function(self.space, self.manifold, rng)) for _ in range(samples)]
        d = np.array([[float(self.y_dist(a, b)) for b in tokens] for a in tokens])
        if not np.all(np.isfinite(d)):
            raise NotAPseudoMetric(f"{self.name}: distance is not finite on sampled tokens")
        defects = {
            "self-distance": float(np.max(np.abs(np.diag(d)))),
            "negativity": max(0.0, -float(np.min(d))),
            "asymmetry": float(np.max(np.abs(d - d.T))),
            # excess[i, j, k] = d(i, k) - d(i, j) - d(j, k)
            "triangle": max(0.0, float(np.max(d[:, None, :] - d[:, :, None] - d[None, :, :]))),
        }
        axiom, worst = max(defects.items(), key=lambda item: item[1])
        if worst > tol:
            raise NotAPseudoMetric(f"{self.name}: {axiom} defect {worst:.3e} exceeds {tol:.1e}")
        logger.debug(f"{self.name}: pseudo-metric defect {worst:.3e} on {samples} tokens")
        return worst


def _probe_dist2(manifold: Manifold, p, p_prime) -> float:
    d2 = float(manifold.dist2(p, p_prime))
    if d2 == 0.0:
        raise DegenerateProbe("probe points p and p' coincide")
    return d2


def default_probe_pair(manifold: Manifold, rng=None) -> tuple[np.ndarray, np.ndarray]:
    """A random p and a p' at distance about 1 from it."""
    rng = as_rng(rng)
    p = manifold.random_point(rng)
    q = manifold.random_point(rng)
    return p, manifold.geodesic_point(p, q, min(1.0, 1.0 / float(manifold.dist(p, q))))


def recover_eta(oracle: AffineOracle, p, p_prime) -> DensityFn:
    """eta_i = d_Y(F(p with p' at atom i), F(p))^2 / (p_i d^2(p, p'))."""
    space, manifold = oracle.space, oracle.manifold
    d2 = _probe_dist2(manifold, p, p_prime)
    base = constant_function(space, manifold, p)
    base_token = oracle(base)
    values = []
    for i in range(space.n):
        y = float(oracle.y_dist(oracle(with_atom(base, i, p_prime)), base_token))
        values.append(y * y / (space.weights[i] * d2))
    logger.debug(f"{oracle.name}: recovered eta {values}")
    return make_density(values)


def welldefinedness_check(oracle: AffineOracle, probe_pairs: Sequence[tuple]) -> float:
    """Max over atoms and probe pairs of |eta(pair) - eta(first pair)|."""
    if len(probe_pairs) < 2:
        raise InsufficientProbes("well-definedness needs at least two probe pairs")
    reference = recover_eta(oracle, *probe_pairs[0]).array
    worst = 0.0
    for p, p_prime in probe_pairs[1:]:
        worst = max(worst, float(np.max(np.abs(recover_eta(oracle, p, p_prime).array - reference))))
    return worst


def affine_verdict(deviation: float, threshold: float = NOT_AFFINE_THRESHOLD) -> str:
    return "AFFINE" if deviation <= threshold else "NOT_AFFINE"


def random_pairs(space: FiniteMeasureSpace, manifold: Manifold, count: int, rng=None) -> list[tuple[L2Function, L2Function]]:
    rng = as_rng(rng)
    return [
        (random_function(space, manifold, rng), random_function(space, manifold, rng)) for _ in range(count)
    ]


def verify_identity(oracle: AffineOracle, eta: DensityFn, samples: Iterable[tuple[L2Function, L2Function]]) -> float:
    """max |d_Y(Ff, Fg)^2 - d_eta(f, g)^2| over the samples."""
    worst = 0.0
    for f, g in samples:
        y = oracle.distance(f, g)
        worst = max(worst, abs(y * y - d_eta(eta, f, g) ** 2))
    return worst


# ---------------------------------------------------------------------------
# Additivity and the Lipschitz bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdditivityReport:
    additivity_defect: float
    consistency_defect: float
    lipschitz: float
    bound_excess: float
    pairs_checked: int

    @property
    def passed(self) -> bool:
        return self.bound_excess <= LIPSCHITZ_SLACK

    def to_json(self) -> dict:
        return {
            "additivity_defect": self.additivity_defect,
            "consistency_defect": self.consistency_defect,
            "lipschitz": self.lipschitz,
            "bound_excess": self.bound_excess,
            "pairs_checked": self.pairs_checked,
        }


def block_measure(oracle: AffineOracle, atoms: Sequence[int], p, p_prime) -> float:
    """mu~(A) probed directly: the two-block simple functions (p on all) vs (p' on A, p off A)."""
    space, manifold = oracle.space, oracle.manifold
    d2 = _probe_dist2(manifold, p, p_prime)
    chosen = sorted(set(atoms))
    rest = [i for i in range(space.n) if i not in set(chosen)]
    if not rest:
        moved = constant_function(space, manifold, p_prime)
    else:
        part = make_partition(space.n, [chosen, rest])
        xs = [p_prime, p] if part.blocks[0] == tuple(chosen) else [p, p_prime]
        moved = simple_embed(space, manifold, part, xs)
    y = oracle.distance(moved, constant_function(space, manifold, p))
    return y * y / d2


def estimate_lipschitz(oracle: AffineOracle, rng=None, pairs: int = LIPSCHITZ_PAIRS, probe=None) -> float:
    """Max distance ratio over random pairs and over the single-atom probes."""
    rng = as_rng(rng)
    space, manifold = oracle.space, oracle.manifold
    best = 0.0
    for f, g in random_pairs(space, manifold, pairs, rng):
        d = d_l2(f, g)
        if d > 0:
            best = max(best, oracle.distance(f, g) / d)
    p, p_prime = probe if probe is not None else default_probe_pair(manifold, rng)
    base = constant_function(space, manifold, p)
    for i in range(space.n):
        moved = with_atom(base, i, p_prime)
        best = max(best, oracle.distance(moved, base) / d_l2(moved, base))
    return best


def additivity_and_bound(
    oracle: AffineOracle,
    eta: DensityFn,
    *,
    rng=None,
    pairs: int = LIPSCHITZ_PAIRS,
    disjoint_pairs: int = 20,
) -> AdditivityReport:
    """Check mu~(A u B) = mu~(A) + mu~(B) on sampled disjoint A, B, and eta_i <= L^2."""
    rng = as_rng(rng)
    space, manifold = oracle.space, oracle.manifold
    p, p_prime = default_probe_pair(manifold, rng)

    additivity = 0.0
    consistency = 0.0
    checked = 0
    if space.n >= 2:
        for _ in range(disjoint_pairs):
            labels = rng.integers(0, 3, size=space.n)
            a = [int(i) for i in np.flatnonzero(labels == 0)]
            b = [int(i) for i in np.flatnonzero(labels == 1)]
            if not a or not b:
                continue
            mu_a = block_measure(oracle, a, p, p_prime)
            mu_b = block_measure(oracle, b, p, p_prime)
            mu_ab = block_measure(oracle, a + b, p, p_prime)
            additivity = max(additivity, abs(mu_ab - mu_a - mu_b))
            consistency = max(
                consistency, abs(mu_a - eta.measure(space, a)), abs(mu_b - eta.measure(space, b))
            )
            checked += 1

    lipschitz = estimate_lipschitz(oracle, rng, pairs, probe=(p, p_prime))
    excess = float(np.max(eta.array)) - lipschitz * lipschitz
    logger.info(
        f"{oracle.name}: additivity defect {additivity:.3e}, L^ = {lipschitz:.6g}, max eta - L^2 = {excess:.3e}"
    )
    return AdditivityReport(additivity, consistency, lipschitz, excess, checked)


# ---------------------------------------------------------------------------
# Product targets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FactorConstants:
    constants: tuple[float, ...]
    residual: float

    def to_json(self) -> dict:
        return {"constants": list(self.constants), "residual": self.residual}


def factor_constants(
    oracle: AffineOracle,
    basepoint=None,
    *,
    rng=None,
    pairs: int = 100,
    tol: float = INCONSISTENT_TOL,
) -> FactorConstants:
    """Constants c_i with d_Y^2 = sum_i c_i^2 dist_i^2 for F on L2(point, M_1 x ... x M_k)."""
    space, manifold = oracle.space, oracle.manifold
    if not isinstance(manifold, Product):
        raise NotAProduct(f"{manifold} is not a product target")
    if space.n != 1:
        raise SpaceMismatch(f"factor constants are read on a single-atom space, got {space.n} atoms")
    rng = as_rng(rng)
    q = manifold.random_point(rng) if basepoint is None else manifold.validate_points(basepoint)
    base = constant_function(space, manifold, q)
    parts = manifold.split(q)

    constants = []
    for i, factor in enumerate(manifold.factors):
        target = factor.random_point(rng)
        moved_part = factor.geodesic_point(parts[i], target, min(1.0, 1.0 / float(factor.dist(parts[i], target))))
        moved = manifold.join(moved_part if k == i else part for k, part in enumerate(parts))
        d = float(factor.dist(parts[i], moved_part))
        constants.append(oracle.distance(constant_function(space, manifold, moved), base) / d)

    c2 = np.array(constants) ** 2
    residual = 0.0
    for _ in range(pairs):
        x = manifold.random_point(rng)
        y = manifold.random_point(rng)
        yd = oracle.distance(constant_function(space, manifold, x), constant_function(space, manifold, y))
        mixed = math.fsum(c2 * manifold.factor_dist2(x, y))
        residual = max(residual, abs(yd * yd - mixed))
    if residual > tol:
        raise InconsistentConstants(
            f"{oracle.name}: constants {constants} leave a mixed-identity residual of {residual:.3e}"
        )
    return FactorConstants(tuple(constants), residual)


def recover_splitting(projection: AffineOracle, complement: AffineOracle, p, p_prime) -> tuple[int, ...]:
    """The set A of a splitting L2(Omega, M) = Y x Y-bar from its two projections.

    Both densities must be indicators and add up to one.
    """
    eta = recover_eta(projection, p, p_prime).array
    eta_bar = recover_eta(complement, p, p_prime).array
    indicator = np.minimum(np.abs(eta), np.abs(eta - 1.0))
    if np.max(indicator) > SPLITTING_TOL or np.max(np.abs(eta + eta_bar - 1.0)) > SPLITTING_TOL:
        raise InconsistentConstants("the projections do not induce complementary indicator densities")
    return tuple(int(i) for i in np.flatnonzero(eta > 0.5))


# ---------------------------------------------------------------------------
# Builtin oracles
# ---------------------------------------------------------------------------


def identity_oracle(space: FiniteMeasureSpace, manifold: Manifold) -> AffineOracle:
    return AffineOracle(lambda f: f, d_l2, space, manifold, name="identity")


def restriction_oracle(space: FiniteMeasureSpace, manifold: Manifold, atoms: Iterable[int]) -> AffineOracle:
    """f -> f|_A with the ambient weights; eta is the indicator of A."""
    chosen = sorted(set(atoms))
    return AffineOracle(lambda f: restrict(f, chosen), d_l2, space, manifold, name="restriction")


def eta_projection_oracle(space: FiniteMeasureSpace, manifold: Manifold, eta: DensityFn) -> AffineOracle:
    """The quotient map onto (L2_eta, d_eta)."""
    if eta.n != space.n:
        raise SpaceMismatch(f"density has {eta.n} values, space has {space.n} atoms")
    return AffineOracle(lambda f: f, lambda a, b: d_eta(eta, a, b), space, manifold, name="eta_projection")


def constant_oracle(space: FiniteMeasureSpace, manifold: Manifold) -> AffineOracle:
    return AffineOracle(lambda f: None, lambda a, b: 0.0, space, manifold, name="constant")


def clipped_oracle(space: FiniteMeasureSpace, manifold: Manifold, radius: float = 1.0) -> AffineOracle:
    """Radial projection onto the closed ball of `radius` at the origin; not affine."""
    if not isinstance(manifold, Euclidean):
        raise UnsupportedVariant("the clipped control needs a Euclidean target")

    def clip(f: L2Function) -> L2Function:
        norms = np.linalg.norm(f.points, axis=-1, keepdims=True)
        scale = np.minimum(1.0, radius / np.where(norms > 0, norms, 1.0))
        return L2Function(f.space, f.manifold, f.points * scale)

    return AffineOracle(clip, d_l2, space, manifold, name="clipped")


def dilation_oracle(space: FiniteMeasureSpace, manifold: Manifold, a: float) -> AffineOracle:
    """d_Y = a d; eta is constantly a^2."""
    return AffineOracle(lambda f: f, lambda x, y: a * d_l2(x, y), space, manifold, name="dilation")


def weighted_product_oracle(space: FiniteMeasureSpace, manifold: Manifold, weights: Sequence[float]) -> AffineOracle:
    """d_Y^2 = sum_k c_k^2 d_k^2 over the factors of a product target."""
    if not isinstance(manifold, Product):
        raise NotAProduct(f"{manifold} is not a product target")
    if len(weights) != len(manifold.factors):
        raise NotAProduct(f"{len(weights)} weights for {len(manifold.factors)} factors")
    c = [float(w) for w in weights]

    def y_dist(f: L2Function, g: L2Function) -> float:
        return math.sqrt(
            math.fsum(ck * ck * d_l2(a, b) ** 2 for ck, a, b in zip(c, product_split(f), product_split(g)))
        )

    return AffineOracle(lambda f: f, y_dist, space, manifold, name="weighted_product")


def factor_projection_oracle(space: FiniteMeasureSpace, manifold: Manifold, index: int) -> AffineOracle:
    if not isinstance(manifold, Product):
        raise NotAProduct(f"{manifold} is not a product target")
    return AffineOracle(
        lambda f: product_split(f)[index], d_l2, space, manifold, name=f"factor_projection[{index}]"
    )


def _default_block(space: FiniteMeasureSpace) -> list[int]:
    return list(range(max(1, space.n // 2)))


BUILTIN_ORACLES: dict[str, Callable[..., AffineOracle]] = {
    "identity": lambda space, manifold, params, rng: identity_oracle(space, manifold),
    "restriction": lambda space, manifold, params, rng: restriction_oracle(
        space, manifold, params.get("atoms", _default_block(space))
    ),
    "eta_projection": lambda space, manifold, params, rng: eta_projection_oracle(
        space,
        manifold,
        make_density(params["eta"]) if "eta" in params else make_density(rng.uniform(0.0, 2.0, space.n)),
    ),
    "constant": lambda space, manifold, params, rng: constant_oracle(space, manifold),
    "clipped": lambda space, manifold, params, rng: clipped_oracle(space, manifold, params.get("radius", 1.0)),
    "dilation": lambda space, manifold, params, rng: dilation_oracle(space, manifold, params.get("a", 2.0)),
    "weighted_product": lambda space, manifold, params, rng: weighted_product_oracle(
        space, manifold, params.get("c", [1.0, 0.5])
    ),
    "factor_projection": lambda space, manifold, params, rng: factor_projection_oracle(
        space, manifold, params.get("index", 0)
    ),
}


def builtin_oracle(name: str, space: FiniteMeasureSpace, manifold: Manifold, params: dict | None = None, rng=None) -> AffineOracle:
    """Look up a builtin oracle; `name` may carry the "builtin:" prefix."""
    key = name.removeprefix("builtin:").replace("-", "_")
    if key not in BUILTIN_ORACLES:
        raise UnsupportedVariant(f"unknown builtin oracle '{name}'; known: {sorted(BUILTIN_ORACLES)}")
    return BUILTIN_ORACLES[key](space, manifold, params or {}, as_rng(rng))

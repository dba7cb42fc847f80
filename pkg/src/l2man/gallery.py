"""Explicit isometries and the counterexamples to rigidity.

Grid functions are L2Functions over uniform_interval(m), the grid model of
[0, 1]. Interleaving identifies L2(grid m, X^k) with L2(grid k*m, sqrt(k) X):
output atom i*m + j carries factor i of input atom j, the grid form of
t -> f_i(k t - i) on the i-th of k equal subintervals.
"""

import logging
import math
from collections.abc import Sequence

import numpy as np

from .errors import DivisibilityError, ManifoldMismatch, NotAProduct
from .isometry_group import IsometryOracle, L2Isometry, oracle_from_isometry, pure_automorphism, pure_pointwise
from .l2_space import L2Function, product_glue, product_split
from .manifolds import Euclidean, Manifold, ManifoldIsometry, Product, Scaled, as_rng, power
from .measure_space import Automorphism, FiniteMeasureSpace, require_grid, uniform_interval

logger = logging.getLogger(__name__)

# Scaled(c, X) is accepted as sqrt(k) X when |c - sqrt(k)| is below this.
SCALE_TOL = 1e-12


def _common_factor(manifold: Manifold) -> Manifold:
    if not isinstance(manifold, Product):
        raise NotAProduct(f"interleaving needs a power X^k, got {manifold}")
    first = manifold.factors[0]
    if any(factor != first for factor in manifold.factors[1:]):
        raise NotAProduct("interleaving needs identical factors")
    return first


def interleave(f: L2Function) -> L2Function:
    """L2(grid m, X^k) -> L2(grid k*m, sqrt(k) X); distances are preserved."""
    m = require_grid(f.space)
    base = _common_factor(f.manifold)
    k = len(f.manifold.factors)
    parts = f.manifold.split(f.points)
    return L2Function(uniform_interval(k * m), Scaled(math.sqrt(k), base), np.concatenate(parts, axis=0))


def deinterleave(h: L2Function, k: int) -> L2Function:
    """Inverse of interleave; the grid size must be divisible by k."""
    size = require_grid(h.space)
    if k < 2 or size % k:
        raise DivisibilityError(f"grid of {size} atoms cannot be split into {k} interleaved factors")
    if not isinstance(h.manifold, Scaled) or abs(h.manifold.c - math.sqrt(k)) > SCALE_TOL:
        raise ManifoldMismatch(f"deinterleaving by {k} needs a sqrt({k})-scaled target, got {h.manifold}")
    m = size // k
    manifold = power(h.manifold.base, k)
    blocks = [h.points[i * m : (i + 1) * m] for i in range(k)]
    return L2Function(uniform_interval(m), manifold, manifold.join(blocks))


def interleave_oracle(m: int, base: Manifold, k: int = 2) -> IsometryOracle:
    """interleave as an oracle on L2(grid m, X^k); its codomain is a different L2 space."""
    return IsometryOracle(interleave, uniform_interval(m), power(base, k), name=f"interleave[k={k}]", reentrant=True)


def quarter_swap(m: int) -> Automorphism:
    """Fix the outer quarters of the grid and swap the two middle ones."""
    if m % 4:
        raise DivisibilityError(f"the quarter swap needs 4 | m, got m={m}")
    q = m // 4
    perm = []
    for j in range(m):
        if q <= j < 2 * q:
            perm.append(j + q)
        elif 2 * q <= j < 3 * q:
            perm.append(j - q)
        else:
            perm.append(j)
    return Automorphism(tuple(perm))


def _precompose(h: L2Function, phi: Automorphism) -> L2Function:
    return L2Function(h.space, h.manifold, h.points[list(phi.perm)])


def r1_nonrigid(base: Manifold, m: int, *, swap: bool = True) -> IsometryOracle:
    """deinterleave o (quarter swap) o interleave on L2(grid m, X x X).

    On the constant (x, y) the output is (x, x) on the first half-grid and
    (y, y) on the second. With swap=False the middle step is the identity.
    """
    if m % 4:
        raise DivisibilityError(f"the product counterexample needs 4 | m, got m={m}")
    phi = quarter_swap(2 * m) if swap else Automorphism(tuple(range(2 * m)))

    def forward(f: L2Function) -> L2Function:
        return deinterleave(_precompose(interleave(f), phi), 2)

    name = "r1" if swap else "r1[identity]"
    return IsometryOracle(forward, uniform_interval(m), power(base, 2), name=name, reentrant=True)


def hilbert_unit_vectors(m: int) -> tuple[np.ndarray, np.ndarray]:
    """e = sqrt(2) on the first half-grid (0 elsewhere) and e' = 1 everywhere; both unit vectors."""
    if m % 2:
        raise DivisibilityError(f"the Hilbert rotation needs an even grid, got m={m}")
    e = np.zeros(m)
    e[: m // 2] = math.sqrt(2.0)
    return e, np.ones(m)


def _hilbert_rotation(m: int):
    """The rotation of the plane span{e, e'} taking e to e', identity on its complement."""
    e, e_prime = hilbert_unit_vectors(m)

    def inner(x, y):
        return np.sum(x * y, axis=-1) / m

    u1 = e
    w = e_prime - inner(e_prime, u1) * u1
    u2 = w / math.sqrt(inner(w, w))
    theta = math.acos(min(1.0, inner(e, e_prime)))
    c, s = math.cos(theta), math.sin(theta)

    def rotate(x: np.ndarray) -> np.ndarray:
        a = inner(x, u1)
        b = inner(x, u2)
        return x + (c - 1.0) * (a * u1 + b * u2) + s * (a * u2 - b * u1)

    return rotate


def hilbert_nonrigid(m: int) -> IsometryOracle:
    """A linear isometry T of L2(grid m, R) with T(e) = e'.

    T spreads the mass of the first half-grid over the whole grid, so it is
    not a (automorphism, pointwise isometry) pair.
    """
    rotate = _hilbert_rotation(m)
    space = uniform_interval(m)
    manifold = Euclidean(1)

    def forward(f: L2Function) -> L2Function:
        return L2Function(f.space, f.manifold, rotate(f.points[:, 0])[:, None])

    return IsometryOracle(forward, space, manifold, name="hilbert", reentrant=True)


def hilbert_probes(m: int, rng=None) -> list[tuple[L2Function, L2Function]]:
    """(e, 0) followed by 2m - 1 random pairs."""
    rng = as_rng(rng)
    space = uniform_interval(m)
    manifold = Euclidean(1)
    e, _ = hilbert_unit_vectors(m)
    probes = [(L2Function(space, manifold, e[:, None]), L2Function(space, manifold, np.zeros((m, 1))))]
    for _ in range(2 * m - 1):
        probes.append(
            (
                L2Function(space, manifold, rng.standard_normal((m, 1))),
                L2Function(space, manifold, rng.standard_normal((m, 1))),
            )
        )
    return probes


def automorphism_oracle(space: FiniteMeasureSpace, manifold: Manifold, phi: Automorphism) -> IsometryOracle:
    return oracle_from_isometry(pure_automorphism(space, manifold, phi), name="automorphism")


def pointwise_rotation_oracle(
    space: FiniteMeasureSpace, manifold: Manifold, rho: Sequence[ManifoldIsometry] | None = None, rng=None
) -> IsometryOracle:
    """Pointwise isometries; random per atom when rho is not given."""
    if rho is None:
        rng = as_rng(rng)
        rho = [manifold.random_isometry(rng) for _ in range(space.n)]
    gamma: L2Isometry = pure_pointwise(space, manifold, rho)
    return oracle_from_isometry(gamma, name="pointwise")


def product_factorize(f: L2Function) -> tuple[L2Function, L2Function]:
    """f -> (f_1, f_2) for a two-factor product target."""
    if not isinstance(f.manifold, Product) or len(f.manifold.factors) != 2:
        raise NotAProduct(f"{f.manifold} is not a two-factor product")
    first, second = product_split(f)
    return first, second


def product_unfactorize(first: L2Function, second: L2Function) -> L2Function:
    return product_glue([first, second])

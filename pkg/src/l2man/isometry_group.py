"""Isometries of L2(Omega, M) of the form (automorphism, pointwise isometries).

An L2Isometry is a pair (phi, rho) acting by

    gamma(f)[i] = rho[phi[i]](f[phi[i]])

i.e. precomposition with phi followed by the pointwise isometry family rho.
`apply` is the single source of truth for the composition order; compose,
inverse and conjugate_pointwise are the closed forms derived from it:

    compose(g1, g2):  phi[i] = phi2[phi1[i]],  rho[k] = rho1[phi2^-1[k]] o rho2[k]
    inverse(g):       phi' = phi^-1,           rho'[k] = rho[phi[k]]^-1

decompose() goes the other way: from a black-box isometry it recovers (phi,
rho) by probing with constant functions, and raises NonRigid when the map is
not of this form.
"""

import asyncio
import logging
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import (
    AmbiguousWitness,
    ArityMismatch,
    DegenerateProbe,
    EmptyOrFullSubset,
    InsufficientProbes,
    ManifoldMismatch,
    NonRigid,
    NotAnIsometry,
    NotBijective,
    NotReentrant,
    SpaceMismatch,
)
from .l2_space import L2Function, atom_dist2, constant_function, d_l2, random_function, with_atom
from .manifolds import Manifold, ManifoldIsometry, as_rng, isometry_from_json
from .measure_space import (
    Automorphism,
    FiniteMeasureSpace,
    check_automorphism,
    compose_perms,
    equal_mass_subsets,
    identity_automorphism,
    invert_perm,
    random_automorphism,
)

logger = logging.getLogger(__name__)

# Atoms whose probe outputs move by more than this belong to the difference set.
DIFF_TOL = 1e-8
# Equal-weight test when matching an atom to its image.
WEIGHT_TOL = 1e-10
# Max residual of a fitted rho[i] and of the held-out reconstruction.
FIT_TOL = 1e-8
# Localization: mass equality of candidate sets, and of the displacement sums.
MASS_TOL = 1e-10
LOCALIZATION_TOL = 1e-8
# Isometry validation of black boxes on sampled pairs.
ORACLE_TOL = 1e-9
# Degenerate probes are retried with a fresh p' this many times.
MAX_RESAMPLES = 3
HELD_OUT = 8


@dataclass(frozen=True, eq=False)
class L2Isometry:
    space: FiniteMeasureSpace
    manifold: Manifold
    phi: Automorphism
    rho: tuple[ManifoldIsometry, ...]

    @property
    def n(self) -> int:
        return self.space.n

    def allclose(self, other: "L2Isometry", tol: float = 1e-9) -> bool:
        return (
            self.phi == other.phi
            and len(self.rho) == len(other.rho)
            and all(a.allclose(b, tol) for a, b in zip(self.rho, other.rho))
        )

    def to_json(self) -> dict:
        return {"phi": list(self.phi.perm), "rho": [g.to_json() for g in self.rho]}


def make_l2_isometry(
    space: FiniteMeasureSpace,
    manifold: Manifold,
    phi: Automorphism | Sequence[int],
    rho: Sequence[ManifoldIsometry],
) -> L2Isometry:
    perm = phi.perm if isinstance(phi, Automorphism) else tuple(int(j) for j in phi)
    if not check_automorphism(space, perm):
        raise NotBijective(f"{list(perm)} is not a measure-preserving permutation")
    if len(rho) != space.n:
        raise ArityMismatch(f"{len(rho)} pointwise isometries for {space.n} atoms")
    for g in rho:
        manifold.check_isometry(g)
    return L2Isometry(space, manifold, Automorphism(perm), tuple(rho))


def l2_isometry_from_json(space: FiniteMeasureSpace, manifold: Manifold, obj: dict) -> L2Isometry:
    return make_l2_isometry(
        space, manifold, obj["phi"], [isometry_from_json(manifold, r) for r in obj["rho"]]
    )


def identity_l2_isometry(space: FiniteMeasureSpace, manifold: Manifold) -> L2Isometry:
    return pure_automorphism(space, manifold, identity_automorphism(space))


def pure_automorphism(space: FiniteMeasureSpace, manifold: Manifold, phi: Automorphism) -> L2Isometry:
    """gamma^phi: f -> f o phi."""
    ident = manifold.identity_isometry()
    return L2Isometry(space, manifold, phi, tuple([ident] * space.n))


def pure_pointwise(space: FiniteMeasureSpace, manifold: Manifold, rho: Sequence[ManifoldIsometry]) -> L2Isometry:
    """gamma_rho: f -> rho(f) atom by atom."""
    if len(rho) != space.n:
        raise ArityMismatch(f"{len(rho)} pointwise isometries for {space.n} atoms")
    return L2Isometry(space, manifold, identity_automorphism(space), tuple(rho))


def random_l2_isometry(space: FiniteMeasureSpace, manifold: Manifold, rng=None) -> L2Isometry:
    rng = as_rng(rng)
    phi = random_automorphism(space, rng)
    return L2Isometry(space, manifold, phi, tuple(manifold.random_isometry(rng) for _ in range(space.n)))


def _require_same_space(a, b) -> None:
    if a.space != b.space:
        raise SpaceMismatch("isometry and function live over different measure spaces")
    if a.manifold != b.manifold:
        raise ManifoldMismatch(f"{a.manifold} vs {b.manifold}")


# ---------------------------------------------------------------------------
# Group structure
# ---------------------------------------------------------------------------


def apply(gamma: L2Isometry, f: L2Function) -> L2Function:
    _require_same_space(gamma, f)
    perm = gamma.phi.perm
    points = np.stack([gamma.rho[perm[i]].apply(f.points[perm[i]]) for i in range(f.n)])
    return L2Function(f.space, f.manifold, points)


def compose(g1: L2Isometry, g2: L2Isometry) -> L2Isometry:
    """g1 o g2: apply(compose(g1, g2), f) == apply(g1, apply(g2, f))."""
    _require_same_space(g1, g2)
    phi = compose_perms(g2.phi.perm, g1.phi.perm)
    inv2 = invert_perm(g2.phi.perm)
    rho = tuple(g1.rho[inv2[k]].compose(g2.rho[k]) for k in range(g1.n))
    return L2Isometry(g1.space, g1.manifold, Automorphism(phi), rho)


def inverse(gamma: L2Isometry) -> L2Isometry:
    perm = gamma.phi.perm
    rho = tuple(gamma.rho[perm[k]].inverse() for k in range(gamma.n))
    return L2Isometry(gamma.space, gamma.manifold, gamma.phi.inverse(), rho)


def conjugate_pointwise(gamma: L2Isometry, tau: Sequence[ManifoldIsometry]) -> tuple[ManifoldIsometry, ...]:
    """sigma with gamma o gamma_tau o gamma^-1 == gamma_sigma.

    sigma[i] = rho[phi[i]] o tau[phi[i]] o rho[phi[i]]^-1, so the pointwise
    isometries form a normal subgroup.
    """
    if len(tau) != gamma.n:
        raise ArityMismatch(f"{len(tau)} pointwise isometries for {gamma.n} atoms")
    perm = gamma.phi.perm
    return tuple(
        gamma.rho[perm[i]].compose(tau[perm[i]]).compose(gamma.rho[perm[i]].inverse())
        for i in range(gamma.n)
    )


def factorizations(gamma: L2Isometry) -> tuple[tuple[L2Isometry, L2Isometry], tuple[L2Isometry, L2Isometry]]:
    """Both orders of the semidirect splitting.

    gamma == gamma^phi o gamma_rho == gamma_(rho o phi) o gamma^phi.
    """
    automorphism = pure_automorphism(gamma.space, gamma.manifold, gamma.phi)
    pointwise = pure_pointwise(gamma.space, gamma.manifold, gamma.rho)
    shifted = pure_pointwise(gamma.space, gamma.manifold, [gamma.rho[j] for j in gamma.phi.perm])
    return (automorphism, pointwise), (shifted, automorphism)


# ---------------------------------------------------------------------------
# Black-box isometries
# ---------------------------------------------------------------------------


@dataclass
class IsometryOracle:
    """A black-box self-map of L2(space, manifold).

    Only oracles declared `reentrant` may be probed from several threads.
    """

    forward: Callable[[L2Function], L2Function]
    space: FiniteMeasureSpace
    manifold: Manifold
    name: str = "oracle"
    reentrant: bool = False

    def __call__(self, f: L2Function) -> L2Function:
        return self.forward(f)

    def validate(self, rng=None, pairs: int = 20, tol: float = ORACLE_TOL) -> float:
        """Max |d(Tf, Tg) - d(f, g)| over random pairs; NotAnIsometry beyond tol."""
        rng = as_rng(rng)
        worst = 0.0
        for _ in range(pairs):
            f = random_function(self.space, self.manifold, rng)
            g = random_function(self.space, self.manifold, rng)
            worst = max(worst, abs(d_l2(self(f), self(g)) - d_l2(f, g)))
        if worst > tol:
            raise NotAnIsometry(f"{self.name} distorts distances by {worst:.3e}")
        logger.debug(f"{self.name}: isometry defect {worst:.3e} on {pairs} pairs")
        return worst


def oracle_from_isometry(gamma: L2Isometry, name: str = "semidirect") -> IsometryOracle:
    return IsometryOracle(lambda f: apply(gamma, f), gamma.space, gamma.manifold, name=name, reentrant=True)


# ---------------------------------------------------------------------------
# Rigidity decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Decomposition:
    isometry: L2Isometry
    rho_residuals: tuple[float, ...]
    held_out_residual: float
    resamples: int

    @property
    def max_rho_residual(self) -> float:
        return max(self.rho_residuals)

    def to_json(self) -> dict:
        return {
            "phi": list(self.isometry.phi.perm),
            "rho": [r.to_json() for r in self.isometry.rho],
            "rho_residuals": list(self.rho_residuals),
            "held_out_residual": self.held_out_residual,
            "resamples": self.resamples,
        }


Evaluate = Callable[[list[L2Function]], list[L2Function]]


def _default_basepoints(manifold: Manifold, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """p random, p' on the geodesic towards another random point at distance about 1."""
    p = manifold.random_point(rng)
    q = manifold.random_point(rng)
    d = float(manifold.dist(p, q))
    return p, manifold.geodesic_point(p, q, min(1.0, 1.0 / d))


def _difference_set(manifold: Manifold, out: L2Function, base: L2Function) -> list[int]:
    moved = manifold.dist(out.points, base.points) > DIFF_TOL
    return [int(j) for j in np.flatnonzero(moved)]


def _decompose(
    oracle: IsometryOracle,
    evaluate: Evaluate,
    p=None,
    p_prime=None,
    *,
    rng=None,
    tol: float = FIT_TOL,
    held_out: int = HELD_OUT,
) -> Decomposition:
    space, manifold = oracle.space, oracle.manifold
    rng = as_rng(rng)
    if not manifold.is_rigid:
        logger.warning(f"decomposing {oracle.name} over {manifold}, which is not a rigid target")
    if p is None or p_prime is None:
        p, p_prime = _default_basepoints(manifold, rng)
    p = manifold.validate_points(p)
    p_prime = manifold.validate_points(p_prime)
    if float(manifold.dist(p, p_prime)) == 0.0:
        raise DegenerateProbe("basepoints p and p' coincide")

    n = space.n
    base_in = constant_function(space, manifold, p)
    base_out, *outs = evaluate([base_in] + [with_atom(base_in, i, p_prime) for i in range(n)])

    # (a) each atom i is sent to exactly one atom j of the same weight: phi[j] = i.
    phi: list[int | None] = [None] * n
    resamples = 0
    for i, out in enumerate(outs):
        diff = _difference_set(manifold, out, base_out)
        attempts = 0
        while not diff and attempts < MAX_RESAMPLES:
            attempts += 1
            resamples += 1
            logger.warning(f"{oracle.name}: probe at atom {i} moved nothing, resampling p'")
            fresh = manifold.random_point(rng)
            (out,) = evaluate([with_atom(base_in, i, fresh)])
            diff = _difference_set(manifold, out, base_out)
        if not diff:
            raise NonRigid(f"probe at atom {i} changes no output atom", reason="degenerate-probe", atom=i)
        if len(diff) != 1:
            raise NonRigid(
                f"probe at atom {i} changes {len(diff)} output atoms {diff[:8]}", reason="spread", atom=i
            )
        (j,) = diff
        if abs(space.weights[j] - space.weights[i]) > WEIGHT_TOL:
            raise NonRigid(f"atom {i} is carried to atom {j} of different weight", reason="weight", atom=i)
        if phi[j] is not None:
            raise NonRigid(f"atoms {phi[j]} and {i} both land on atom {j}", reason="not-bijective", atom=i)
        phi[j] = i
        logger.debug(f"{oracle.name}: atom {i} -> output atom {j}")
    perm = tuple(int(i) for i in phi)

    # (b) rho[phi[j]] is read off the constant functions at column j.
    xs = manifold.random_point(rng, size=manifold.ambient_dim + 2)
    const_outs = evaluate([constant_function(space, manifold, x) for x in xs])
    columns = np.stack([out.points for out in const_outs])
    rho: list[ManifoldIsometry | None] = [None] * n
    residuals = [0.0] * n
    for j in range(n):
        g, residual = manifold.fit_isometry(xs, columns[:, j])
        residuals[perm[j]] = residual
        if not residual <= tol:
            raise NonRigid(
                f"atom {perm[j]} is not acted on by an isometry (fit residual {residual:.3e})",
                reason="fit",
                atom=perm[j],
            )
        rho[perm[j]] = g
    recovered = L2Isometry(space, manifold, Automorphism(perm), tuple(rho))

    # (c) held-out check on random functions.
    fs = [random_function(space, manifold, rng) for _ in range(held_out)]
    worst = 0.0
    for f, out in zip(fs, evaluate(fs)):
        worst = max(worst, float(np.max(np.sqrt(atom_dist2(apply(recovered, f), out)))))
    if not worst <= tol:
        raise NonRigid(f"held-out residual {worst:.3e} exceeds {tol:.1e}", reason="held-out")
    logger.info(f"{oracle.name}: decomposed, max fit residual {max(residuals):.3e}, held-out {worst:.3e}")
    return Decomposition(recovered, tuple(residuals), worst, resamples)


def _sequential(oracle: IsometryOracle) -> Evaluate:
    return lambda fs: [oracle(f) for f in fs]


def decompose_with_report(oracle: IsometryOracle, p=None, p_prime=None, **kwargs) -> Decomposition:
    return _decompose(oracle, _sequential(oracle), p, p_prime, **kwargs)


def decompose(oracle: IsometryOracle, p=None, p_prime=None, **kwargs) -> L2Isometry:
    """Recover (phi, rho) from a black-box isometry.

    Probes const p against const p with p' at one atom to find where each atom
    goes, reads rho off constant functions, and checks the reconstruction on
    held-out random functions. Raises NonRigid when any step fails.
    """
    return decompose_with_report(oracle, p, p_prime, **kwargs).isometry


async def decompose_parallel(
    oracle: IsometryOracle, p=None, p_prime=None, *, parallel: int = 4, **kwargs
) -> Decomposition:
    """decompose_with_report with probes issued concurrently, at most `parallel` at once."""
    if not oracle.reentrant:
        raise NotReentrant(f"{oracle.name} is not declared reentrant")
    loop = asyncio.get_running_loop()
    semaphore = asyncio.Semaphore(parallel)

    async def _one(f: L2Function) -> L2Function:
        async with semaphore:
            return await asyncio.to_thread(oracle, f)

    async def _many(fs: list[L2Function]) -> list[L2Function]:
        return list(await asyncio.gather(*(_one(f) for f in fs)))

    def evaluate(fs: list[L2Function]) -> list[L2Function]:
        return asyncio.run_coroutine_threadsafe(_many(fs), loop).result()

    return await asyncio.to_thread(_decompose, oracle, evaluate, p, p_prime, **kwargs)


# ---------------------------------------------------------------------------
# Localization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Localization:
    """Outcome of a localization search.

    `left` and `right` are the displacement masses of the first probe over A
    and over the best candidate B (the unique witness when ok).
    """

    ok: bool
    witness: tuple[int, ...] | None
    left: float
    right: float
    max_deviation: float
    candidates: int

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "witness": None if self.witness is None else list(self.witness),
            "left": self.left,
            "right": self.right,
            "max_deviation": self.max_deviation,
            "candidates": self.candidates,
        }


def localization_check(
    oracle: IsometryOracle,
    atoms: Iterable[int],
    probes: Sequence[tuple[L2Function, L2Function]],
    *,
    tol: float = LOCALIZATION_TOL,
) -> Localization:
    """Search for B with mu(B) = mu(A) carrying the displacement mass of A.

    For every probe pair (f, g) the witness must satisfy
    sum_{i in A} p_i d^2(f_i, g_i) == sum_{j in B} p_j d^2(Tf_j, Tg_j).
    All equal-mass subsets are enumerated, so keep n small.
    """
    space = oracle.space
    chosen = sorted(set(atoms))
    if not chosen:
        raise EmptyOrFullSubset("localization needs a nonempty set")
    if len(probes) < 2 * space.n:
        raise InsufficientProbes(f"{len(probes)} probes given, at least {2 * space.n} needed")

    p = space.p
    left = []
    right = []
    for f, g in probes:
        left.append(float(np.sum(p[chosen] * atom_dist2(f, g)[chosen])))
        right.append(p * atom_dist2(oracle(f), oracle(g)))
    left_arr = np.array(left)
    right_arr = np.stack(right)

    passing: list[tuple[int, ...]] = []
    best: tuple[float, tuple[int, ...]] | None = None
    count = 0
    for subset in equal_mass_subsets(space, space.mass(chosen), MASS_TOL):
        count += 1
        sums = right_arr[:, list(subset)].sum(axis=1)
        deviation = float(np.max(np.abs(sums - left_arr)))
        if best is None or deviation < best[0]:
            best = (deviation, subset)
        if deviation <= tol:
            passing.append(subset)

    if len(passing) > 1:
        raise AmbiguousWitness(f"{len(passing)} sets pass the localization test; add probes")
    if best is None:
        logger.info(f"{oracle.name}: no set has the mass of A")
        return Localization(False, None, left[0], float("nan"), float("inf"), 0)
    deviation, subset = best
    right0 = float(right_arr[0, list(subset)].sum())
    if passing:
        logger.info(f"{oracle.name}: A={chosen} localizes to B={list(passing[0])}")
        return Localization(True, passing[0], left[0], right0, deviation, count)
    logger.info(f"{oracle.name}: A={chosen} does not localize (best deviation {deviation:.3e})")
    return Localization(False, None, left[0], right0, deviation, count)

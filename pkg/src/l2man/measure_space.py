"""Finite probability spaces, their automorphisms, partitions and densities.

A standard probability space is, up to isomorphism, an interval with Lebesgue
measure plus countably many atoms. Here every space is a finite list of atoms;
the interval part is modelled by a uniform grid (uniform_interval), which is a
faithful approximation because simple functions are dense in L2.

Index conventions are 0-based throughout. A permutation `perm` is the map
i -> perm[i].
"""

import itertools
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyOrFullSubset,
    EmptySpace,
    InvalidPartition,
    LengthMismatch,
    NegativeDensity,
    NonPositiveWeight,
    NotAGrid,
    NotBijective,
    NotNormalized,
    SpaceMismatch,
)

logger = logging.getLogger(__name__)

# Double-precision tolerance for sum(p_i) == 1 and for p_perm(i) == p_i.
NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class FiniteMeasureSpace:
    """Atoms with positive weights and no normalization requirement.

    Restrictions of a probability space to a subset of atoms keep the ambient
    weights and land here.
    """

    weights: tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)

    def mass(self, atoms: Iterable[int]) -> float:
        """mu(A) for a set of atom indices."""
        return math.fsum(self.weights[i] for i in atoms)

    def to_json(self) -> dict:
        return {"weights": list(self.weights)}


@dataclass(frozen=True)
class ProbSpace(FiniteMeasureSpace):
    """A finite probability space. Build with make_prob_space / uniform_interval."""

    @property
    def is_uniform(self) -> bool:
        return len(set(self.weights)) == 1


def _validate_weights(weights: Sequence[float]) -> tuple[float, ...]:
    if len(weights) == 0:
        raise EmptySpace("a space needs at least one atom")
    values = tuple(float(w) for w in weights)
    for i, w in enumerate(values):
        if not w > 0:
            raise NonPositiveWeight(f"atom {i} has weight {w}; all weights must be positive")
    return values


def make_finite_space(weights: Sequence[float]) -> FiniteMeasureSpace:
    return FiniteMeasureSpace(_validate_weights(weights))


def make_prob_space(weights: Sequence[float]) -> ProbSpace:
    """Validate weights and return a ProbSpace.

    Raises NonPositiveWeight for any p_i <= 0 and NotNormalized when the
    compensated sum differs from one by more than NORMALIZATION_TOL.
    """
    values = _validate_weights(weights)
    total = math.fsum(values)
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"weights sum to {total!r}, not 1")
    return ProbSpace(values)


def uniform_interval(m: int) -> ProbSpace:
    """The m-cell grid model of ([0,1], Lebesgue); atom i is [i/m, (i+1)/m)."""
    if m < 1:
        raise EmptySpace(f"grid size must be positive, got {m}")
    return make_prob_space([1.0 / m] * m)


def require_grid(space: FiniteMeasureSpace) -> int:
    """Return the grid size of a uniform probability space or raise NotAGrid."""
    if not isinstance(space, ProbSpace) or not space.is_uniform:
        raise NotAGrid("a uniform grid space is required")
    return space.n


def prob_space_from_json(obj: dict) -> ProbSpace:
    """Accepts {"weights": [...]} or the grid shorthand {"uniform": m}."""
    if "uniform" in obj:
        return uniform_interval(int(obj["uniform"]))
    return make_prob_space(obj["weights"])


def restrict_space(space: FiniteMeasureSpace, atoms: Iterable[int]) -> FiniteMeasureSpace:
    """The sub-space on `atoms` (sorted) with the ambient, unnormalized weights."""
    idx = sorted(set(atoms))
    if not idx:
        raise EmptyOrFullSubset("cannot restrict to the empty set")
    if idx[0] < 0 or idx[-1] >= space.n:
        raise LengthMismatch(f"atom indices {idx} out of range for {space.n} atoms")
    return FiniteMeasureSpace(tuple(space.weights[i] for i in idx))


def normalize_space(space: FiniteMeasureSpace) -> ProbSpace:
    """Divide weights by total mass. Distances over the result scale by 1/sqrt(mass)."""
    total = space.total_mass
    return make_prob_space([w / total for w in space.weights])


# ---------------------------------------------------------------------------
# Permutations and automorphisms
# ---------------------------------------------------------------------------


def is_permutation(perm: Sequence[int]) -> bool:
    return sorted(perm) == list(range(len(perm)))


def compose_perms(outer: Sequence[int], inner: Sequence[int]) -> tuple[int, ...]:
    """(outer o inner)(i) = outer[inner[i]]."""
    if len(outer) != len(inner):
        raise LengthMismatch(f"cannot compose permutations of length {len(outer)} and {len(inner)}")
    return tuple(outer[inner[i]] for i in range(len(inner)))


def invert_perm(perm: Sequence[int]) -> tuple[int, ...]:
    if not is_permutation(perm):
        raise NotBijective(f"{list(perm)} is not a permutation")
    inv = [0] * len(perm)
    for i, j in enumerate(perm):
        inv[j] = i
    return tuple(inv)


@dataclass(frozen=True)
class Automorphism:
    """A measure-preserving permutation of the atoms (p_perm(i) == p_i)."""

    perm: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.perm)

    def __call__(self, i: int) -> int:
        return self.perm[i]

    def compose(self, inner: "Automorphism") -> "Automorphism":
        return Automorphism(compose_perms(self.perm, inner.perm))

    def inverse(self) -> "Automorphism":
        return Automorphism(invert_perm(self.perm))

    @property
    def is_identity(self) -> bool:
        return all(i == j for i, j in enumerate(self.perm))

    def to_json(self) -> dict:
        return {"perm": list(self.perm)}


def check_automorphism(space: FiniteMeasureSpace, perm: Sequence[int]) -> bool:
    """True iff `perm` is a bijection with p_perm(i) == p_i (within NORMALIZATION_TOL)."""
    if len(perm) != space.n:
        raise LengthMismatch(f"permutation has length {len(perm)}, space has {space.n} atoms")
    if not is_permutation(perm):
        return False
    w = space.weights
    return all(abs(w[j] - w[i]) <= NORMALIZATION_TOL for i, j in enumerate(perm))


def make_automorphism(space: FiniteMeasureSpace, perm: Sequence[int]) -> Automorphism:
    """Validated Automorphism; raises NotBijective if perm is not weight-preserving."""
    perm = tuple(int(j) for j in perm)
    if not check_automorphism(space, perm):
        raise NotBijective(f"{list(perm)} is not a measure-preserving permutation")
    return Automorphism(perm)


def identity_automorphism(space: FiniteMeasureSpace) -> Automorphism:
    return Automorphism(tuple(range(space.n)))


def automorphism_from_json(space: FiniteMeasureSpace, obj: dict) -> Automorphism:
    return make_automorphism(space, obj["perm"])


def random_automorphism(space: FiniteMeasureSpace, rng: np.random.Generator) -> Automorphism:
    """Uniformly shuffle atoms inside each class of equal weight."""
    perm = list(range(space.n))
    # Keyed by the first weight seen; later atoms join within NORMALIZATION_TOL.
    classes: list[tuple[float, list[int]]] = []
    for i, w in enumerate(space.weights):
        for ref, members in classes:
            if abs(w - ref) <= NORMALIZATION_TOL:
                members.append(i)
                break
        else:
            classes.append((w, [i]))
    for _, members in classes:
        shuffled = list(rng.permutation(members))
        for i, j in zip(members, shuffled):
            perm[i] = int(j)
    return Automorphism(tuple(perm))


# ---------------------------------------------------------------------------
# Densities and pushforwards
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityFn:
    """A nonnegative density per atom; induces mu~(A) = sum_{i in A} eta_i p_i."""

    values: tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def measure(self, space: FiniteMeasureSpace, atoms: Iterable[int]) -> float:
        if self.n != space.n:
            raise LengthMismatch(f"density has {self.n} values, space has {space.n} atoms")
        return math.fsum(self.values[i] * space.weights[i] for i in atoms)

    def complement(self) -> "DensityFn":
        """1 - eta; only a density when eta takes values in [0, 1]."""
        return make_density([1.0 - v for v in self.values])

    def to_json(self) -> list[float]:
        return list(self.values)


def make_density(values: Iterable[float]) -> DensityFn:
    vals = tuple(float(v) for v in values)
    for i, v in enumerate(vals):
        if v < 0:
            raise NegativeDensity(f"density value {v} at atom {i} is negative")
    return DensityFn(vals)


def constant_density(n: int, value: float = 1.0) -> DensityFn:
    return make_density([value] * n)


def indicator_density(n: int, atoms: Iterable[int]) -> DensityFn:
    chosen = set(atoms)
    return make_density([1.0 if i in chosen else 0.0 for i in range(n)])


def pushforward_density(space: FiniteMeasureSpace, index_map: Sequence[int]) -> DensityFn:
    """Radon-Nikodym derivative d(phi_* mu)/d mu of a bijective index map.

    values[j] = p_{phi^-1(j)} / p_j, so (phi_* mu)(A) = sum_{j in A} values[j] p_j.
    Identically one for automorphisms.
    """
    if len(index_map) != space.n:
        raise LengthMismatch(f"index map has length {len(index_map)}, space has {space.n} atoms")
    if not is_permutation(index_map):
        raise NotBijective(f"{list(index_map)} is not a bijection of atom indices")
    inv = invert_perm(index_map)
    w = space.weights
    return make_density([w[inv[j]] / w[j] for j in range(space.n)])


def pushforward_measure(space: FiniteMeasureSpace, index_map: Sequence[int], atoms: Iterable[int]) -> float:
    """(phi_* mu)(A) = mu(phi^-1(A)), computed from the preimage directly."""
    chosen = set(atoms)
    return math.fsum(w for i, w in enumerate(space.weights) if index_map[i] in chosen)


# ---------------------------------------------------------------------------
# Partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    """Disjoint nonempty blocks covering range(n), stored canonically.

    Each block is a sorted tuple and blocks are ordered by their smallest atom,
    so equal partitions compare equal.
    """

    n: int
    blocks: tuple[tuple[int, ...], ...]

    def block_of(self, atom: int) -> int:
        for b, block in enumerate(self.blocks):
            if atom in block:
                return b
        raise LengthMismatch(f"atom {atom} is not covered by the partition")

    def refines(self, other: "Partition") -> bool:
        return all(any(set(b) <= set(c) for c in other.blocks) for b in self.blocks)

    def to_json(self) -> list[list[int]]:
        return [list(b) for b in self.blocks]


def make_partition(n: int, blocks: Iterable[Iterable[int]]) -> Partition:
    canon = sorted((tuple(sorted(set(b))) for b in blocks), key=lambda b: b[0] if b else -1)
    seen: set[int] = set()
    for block in canon:
        if not block:
            raise InvalidPartition("blocks must be nonempty")
        overlap = seen.intersection(block)
        if overlap:
            raise InvalidPartition(f"atoms {sorted(overlap)} appear in more than one block")
        seen.update(block)
    if seen != set(range(n)):
        raise InvalidPartition(f"blocks cover {sorted(seen)}, expected all of range({n})")
    return Partition(n, tuple(canon))


def trivial_partition(n: int) -> Partition:
    return make_partition(n, [range(n)])


def singleton_partition(n: int) -> Partition:
    return make_partition(n, [[i] for i in range(n)])


def two_block_partition(n: int, atoms: Iterable[int]) -> Partition:
    """{A, A^c}; EmptyOrFullSubset unless A is a nonempty proper subset."""
    chosen = sorted(set(atoms))
    rest = [i for i in range(n) if i not in set(chosen)]
    if not chosen or not rest:
        raise EmptyOrFullSubset("a two-block partition needs a nonempty proper subset")
    return make_partition(n, [chosen, rest])


def common_refinement(a: Partition, b: Partition) -> Partition:
    """All nonempty intersections A_i & B_j."""
    if a.n != b.n:
        raise SpaceMismatch(f"partitions over {a.n} and {b.n} atoms")
    pieces = []
    for block_a, block_b in itertools.product(a.blocks, b.blocks):
        meet = set(block_a).intersection(block_b)
        if meet:
            pieces.append(meet)
    return make_partition(a.n, pieces)


def equal_mass_subsets(space: FiniteMeasureSpace, mass: float, tol: float = 1e-10):
    """Yield every subset B (as a sorted tuple) with |mu(B) - mass| <= tol."""
    for size in range(space.n + 1):
        for subset in itertools.combinations(range(space.n), size):
            if abs(space.mass(subset) - mass) <= tol:
                yield subset

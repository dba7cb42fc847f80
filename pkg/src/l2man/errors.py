"""Exception hierarchy.

Every failure the library reports on purpose is an L2ManError, so the CLI and
the MCP tools can catch one type and turn it into an exit code or the single
error-dict shape. Input-validation errors also subclass ValueError.
"""


class L2ManError(Exception):
    """Root of all deliberate l2man failures."""


# -- measure spaces -----------------------------------------------------------


class EmptySpace(L2ManError, ValueError):
    """A space was requested with no atoms."""


class NonPositiveWeight(L2ManError, ValueError):
    """An atom weight is zero or negative."""


class NotNormalized(L2ManError, ValueError):
    """Atom weights do not sum to one within NORMALIZATION_TOL."""


class LengthMismatch(L2ManError, ValueError):
    """A per-atom vector has the wrong length for its space."""


class NotBijective(L2ManError, ValueError):
    """An index map is not a permutation of the atoms."""


class SpaceMismatch(L2ManError, ValueError):
    """Two objects live over different measure spaces."""


class InvalidPartition(L2ManError, ValueError):
    """Blocks overlap, are empty, or do not cover the atoms."""


class NegativeDensity(L2ManError, ValueError):
    """A density takes a negative value."""


class EmptyOrFullSubset(L2ManError, ValueError):
    """A splitting set must be a nonempty proper subset of the atoms."""


# -- manifolds ----------------------------------------------------------------


class InvalidPoint(L2ManError, ValueError):
    """Coordinates do not satisfy the chart invariant of the manifold."""


class NonUniqueGeodesic(L2ManError):
    """The minimizing geodesic between two points is not unique (sphere antipodes)."""


class DegenerateVertex(L2ManError, ValueError):
    """A comparison angle was requested at a vertex coinciding with a side endpoint."""


class VariantMismatch(L2ManError, ValueError):
    """An isometry element does not belong to the manifold variant it is used on."""


class UnsupportedVariant(L2ManError):
    """The operation does not exist on this manifold variant."""


class InvalidIsometry(L2ManError, ValueError):
    """A matrix fails the defining identity of its isometry group."""


class InvalidDilation(L2ManError, ValueError):
    """A dilation factor is zero, negative or not finite."""


class ManifoldMismatch(L2ManError, ValueError):
    """Two functions take values in different manifolds."""


class NotAProduct(L2ManError, ValueError):
    """A product target was required."""


# -- L2 spaces ----------------------------------------------------------------


class IdenticalEndpoints(L2ManError, ValueError):
    """A geodesic was requested between equal functions."""


class OutOfRange(L2ManError, ValueError):
    """A geodesic parameter lies outside [0, 1]."""


class MismatchedBasepoint(L2ManError, ValueError):
    """Two geodesics do not issue from the same function."""


class ArityMismatch(L2ManError, ValueError):
    """The number of supplied items does not match the number of blocks or atoms."""


# -- isometries and oracles ---------------------------------------------------


class NotAnIsometry(L2ManError):
    """A black-box map failed to preserve distances on sampled pairs."""


class NotReentrant(L2ManError):
    """Parallel probing was requested for an oracle not declared reentrant."""


class InsufficientProbes(L2ManError, ValueError):
    """Fewer probes than the identification procedure needs."""


class NonRigid(L2ManError):
    """A black-box isometry is not of the form (automorphism, pointwise isometries).

    `reason` is a short machine-readable tag; `atom` names the atom whose probe
    exposed the failure when there is one.
    """

    def __init__(self, message: str, *, reason: str, atom: int | None = None):
        super().__init__(message)
        self.reason = reason
        self.atom = atom


class AmbiguousWitness(L2ManError):
    """More than one set passed a localization test; more probes are needed."""


# -- affine maps --------------------------------------------------------------


class DegenerateProbe(L2ManError, ValueError):
    """The two probe points coincide, so no density can be read off."""


class InconsistentConstants(L2ManError):
    """Recovered constants do not reproduce the oracle's distances."""


class NotAPseudoMetric(L2ManError):
    """An affine oracle's target distance fails a pseudo-metric axiom on sampled tokens."""


# -- gallery and configuration ------------------------------------------------


class DivisibilityError(L2ManError, ValueError):
    """A grid size is not divisible as the construction requires."""


class NotAGrid(L2ManError, ValueError):
    """A uniform grid space was required."""


class ConfigParse(L2ManError):
    """An experiment configuration could not be parsed.

    Carries the JSON line/column when the document itself is malformed, or the
    offending field name when a value is missing or has the wrong shape.
    """

    def __init__(
        self,
        message: str,
        *,
        line: int | None = None,
        column: int | None = None,
        field: str | None = None,
    ):
        super().__init__(message)
        self.line = line
        self.column = column
        self.field = field

    def diagnostic(self) -> str:
        where = []
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.column is not None:
            where.append(f"column {self.column}")
        if self.field is not None:
            where.append(f"field '{self.field}'")
        prefix = ", ".join(where)
        return f"{prefix}: {self}" if prefix else str(self)

"""Experiment runners shared by the CLI and the MCP server.

An experiment is described by an ExperimentConfig (parsed from JSON) and
produces a Report: a list of named checks, each a value compared against a
tolerance, plus free-form details. Reports serialize deterministically
(sorted keys, no timestamps), so the same config and seed give byte-identical
JSON.
"""

import asyncio
import itertools
import json
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import affine_maps, gallery, isometry_group as ig, l2_space as l2
from .errors import ConfigParse, L2ManError, NonRigid, UnsupportedVariant
from .manifolds import (
    Euclidean,
    Hyperbolic,
    Manifold,
    Product,
    Sphere,
    as_rng,
    manifold_from_json,
    power,
)
from .measure_space import (
    FiniteMeasureSpace,
    NORMALIZATION_TOL,
    check_automorphism,
    common_refinement,
    make_density,
    make_partition,
    prob_space_from_json,
    pushforward_density,
    pushforward_measure,
    random_automorphism,
    trivial_partition,
    two_block_partition,
    uniform_interval,
)

logger = logging.getLogger(__name__)

SCHEMA = "l2man/1"

EXPERIMENTS = (
    "space",
    "metric",
    "angle",
    "group",
    "decompose",
    "eta-recover",
    "affine",
    "factors",
    "interleave",
    "dilation",
    "gallery",
    "suite",
)
GALLERY_CASES = ("interleave", "hilbert", "r1", "product", "automorphism", "pointwise")

DEFAULT_SPACE = {"uniform": 6}
DEFAULT_MANIFOLD = {"sphere": {"dim": 2}}
SPHERE_PAIR = {"product": [{"sphere": {"dim": 2}}, {"sphere": {"dim": 2}}]}

# Default tolerances; any of them can be overridden through config.tolerances.
TOLERANCES = {
    "metric": 1e-9,
    "speed": 1e-8,
    "alpha": 1e-10,
    "angle": 1e-3,
    "monotone": 1e-9,
    "group": 1e-9,
    "rho_match": 1e-9,
    "held_out": 1e-8,
    "oracle": 1e-9,
    "eta": 1e-10,
    "deviation": 1e-9,
    "identity": 1e-8,
    "additivity": 1e-10,
    "lipschitz": affine_maps.LIPSCHITZ_SLACK,
    "factors": 1e-9,
    "mixed": 1e-8,
    "pseudo_metric": affine_maps.PSEUDOMETRIC_TOL,
    "interleave": 1e-12,
    "dilation": 1e-12,
    "split": 1e-12,
    "hilbert": 1e-12,
}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    experiment: str
    space: dict | None = None
    manifold: dict | None = None
    seed: int = 0
    tolerances: dict[str, float] = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    parallel: int = 1
    label: str | None = None
    trace_csv: str | None = None

    def tol(self, name: str) -> float:
        return float(self.tolerances.get(name, TOLERANCES[name]))

    def param(self, name: str, default=None):
        return self.params.get(name, default)

    def build_space(self, default: dict = DEFAULT_SPACE) -> FiniteMeasureSpace:
        spec = self.space if self.space is not None else default
        try:
            return prob_space_from_json(spec)
        except (KeyError, TypeError) as e:
            raise ConfigParse(f"malformed space spec {spec!r}: {e}", field="space") from e
        except L2ManError as e:
            raise ConfigParse(str(e), field="space") from e

    def build_manifold(self, default: dict = DEFAULT_MANIFOLD) -> Manifold:
        return manifold_from_json(self.manifold if self.manifold is not None else default)

    def to_json(self) -> dict:
        out = {
            "experiment": self.experiment,
            "seed": self.seed,
            "tolerances": dict(self.tolerances),
            "params": dict(self.params),
        }
        if self.space is not None:
            out["space"] = self.space
        if self.manifold is not None:
            out["manifold"] = self.manifold
        return out


def _expect(obj: dict, name: str, kind, default=None):
    value = obj.get(name, default)
    if value is not None and not isinstance(value, kind):
        raise ConfigParse(f"'{name}' has the wrong type ({type(value).__name__})", field=name)
    return value


def parse_config(text: str) -> ExperimentConfig:
    """Parse a JSON experiment config; ConfigParse carries line/column or the field."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParse(e.msg, line=e.lineno, column=e.colno) from e
    if not isinstance(obj, dict):
        raise ConfigParse("config must be a JSON object")
    experiment = _expect(obj, "experiment", str)
    if experiment is None:
        raise ConfigParse("missing required field", field="experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigParse(f"unknown experiment '{experiment}'; known: {', '.join(EXPERIMENTS)}", field="experiment")
    seed = _expect(obj, "seed", int, 0)
    if seed is None or isinstance(seed, bool) or seed < 0:
        raise ConfigParse("seed must be a nonnegative integer", field="seed")
    tolerances = _expect(obj, "tolerances", dict, {})
    for name, value in tolerances.items():
        if name not in TOLERANCES:
            raise ConfigParse(f"unknown tolerance '{name}'", field=f"tolerances.{name}")
        if not isinstance(value, (int, float)) or value < 0:
            raise ConfigParse("tolerances must be nonnegative numbers", field=f"tolerances.{name}")
    parallel = _expect(obj, "parallel", int, 1)
    if parallel is None or isinstance(parallel, bool) or parallel < 1:
        raise ConfigParse("parallel must be a positive integer", field="parallel")
    return ExperimentConfig(
        experiment=experiment,
        space=_expect(obj, "space", dict),
        manifold=_expect(obj, "manifold", dict),
        seed=seed,
        tolerances=tolerances,
        params=_expect(obj, "params", dict, {}),
        parallel=parallel,
        label=_expect(obj, "label", str),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigParse(f"cannot read config {path}: {e.strerror}") from e
    return parse_config(text)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    # "le": value <= tolerance passes; "ge": value >= tolerance passes.
    mode: str = "le"

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "mode": self.mode,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return obj


@dataclass
class Report:
    experiment: str
    seed: int
    checks: list[Check] = field(default_factory=list)
    details: dict = field(default_factory=dict)
    verdict: str | None = None

    def add(self, name: str, value: float, tolerance: float, *, at_least: bool = False) -> bool:
        value = float(value)
        ok = value >= tolerance if at_least else value <= tolerance
        self.checks.append(Check(name, value, tolerance, bool(ok), "ge" if at_least else "le"))
        return bool(ok)

    def flag(self, name: str, ok: bool) -> bool:
        return self.add(name, 1.0 if ok else 0.0, 1.0, at_least=True)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_json(self) -> dict:
        return _jsonable(
            {
                "schema": SCHEMA,
                "experiment": self.experiment,
                "seed": self.seed,
                "passed": self.passed,
                "verdict": self.verdict,
                "checks": [c.to_json() for c in self.checks],
                "details": self.details,
            }
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"


def _max_gap(f: l2.L2Function, g: l2.L2Function) -> float:
    return float(np.max(np.sqrt(l2.atom_dist2(f, g))))


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------


def _random_partition(n: int, rng: np.random.Generator):
    labels = rng.integers(0, max(1, min(n, 3)), size=n)
    return make_partition(n, [np.flatnonzero(labels == k).tolist() for k in np.unique(labels)])


def run_space(cfg: ExperimentConfig) -> Report:
    rng = as_rng(cfg.seed)
    space = cfg.build_space()
    report = Report("space", cfg.seed, details={"space": space.to_json(), "n": space.n})
    report.add("normalization", abs(space.total_mass - 1.0), NORMALIZATION_TOL)

    phi1 = random_automorphism(space, rng)
    phi2 = random_automorphism(space, rng)
    report.flag(
        "automorphism_closure",
        check_automorphism(space, phi1.compose(phi2).perm) and check_automorphism(space, phi1.inverse().perm),
    )
    report.add("automorphism_density", float(np.max(np.abs(pushforward_density(space, phi1.perm).array - 1.0))), 0.0)

    index_map = [int(j) for j in rng.permutation(space.n)]
    values = pushforward_density(space, index_map)
    worst = 0.0
    if space.n <= 12:
        for size in range(space.n + 1):
            for subset in itertools.combinations(range(space.n), size):
                worst = max(
                    worst, abs(values.measure(space, subset) - pushforward_measure(space, index_map, subset))
                )
    report.add("pushforward_identity", worst, NORMALIZATION_TOL)

    a = _random_partition(space.n, rng)
    b = _random_partition(space.n, rng)
    ab = common_refinement(a, b)
    report.flag("refinement_idempotent", common_refinement(a, a) == a)
    report.flag("refinement_commutative", ab == common_refinement(b, a))
    report.flag("refinement_refines_both", ab.refines(a) and ab.refines(b))
    report.flag("refinement_trivial", common_refinement(trivial_partition(space.n), b) == b)
    return report


def run_metric(cfg: ExperimentConfig) -> Report:
    rng = as_rng(cfg.seed)
    space = cfg.build_space()
    manifold = cfg.build_manifold()
    trials = int(cfg.param("trials", 100))
    report = Report("metric", cfg.seed, details={"space": space.to_json(), "manifold": manifold.to_json()})

    symmetry = triangle = identity = 0.0
    alpha_norm = alpha_law = speed = 0.0
    eta_bound = eta_split = 0.0
    split = simple = 0.0
    for _ in range(trials):
        f, g, h = (l2.random_function(space, manifold, rng) for _ in range(3))
        dfg, dgh, dfh = l2.d_l2(f, g), l2.d_l2(g, h), l2.d_l2(f, h)
        symmetry = max(symmetry, abs(dfg - l2.d_l2(g, f)))
        triangle = max(triangle, dfh - dfg - dgh)
        identity = max(identity, l2.d_l2(f, f))

        sigma = l2.geodesic(f, g)
        alpha_norm = max(alpha_norm, sigma.normalization_defect())
        alpha_law = max(alpha_law, float(np.max(np.abs(sigma.alpha * sigma.length - np.sqrt(l2.atom_dist2(f, g))))))
        s, t = sorted(rng.uniform(0.0, 1.0, size=2))
        gap = l2.d_l2(l2.eval_geodesic(sigma, s), l2.eval_geodesic(sigma, t))
        speed = max(speed, abs(gap - (t - s) * sigma.length))

        eta = make_density(rng.uniform(0.0, 1.0, space.n))
        eta_bound = max(eta_bound, l2.d_eta(eta, f, g) - math.sqrt(float(np.max(eta.array))) * dfg)
        eta_split = max(
            eta_split, abs(l2.d_eta(eta, f, g) ** 2 + l2.d_eta(eta.complement(), f, g) ** 2 - dfg**2)
        )

        if space.n >= 2:
            atoms = [i for i in range(space.n) if rng.uniform() < 0.5] or [0]
            if len(atoms) == space.n:
                atoms = atoms[:-1]
            fa, fr = l2.restrict_split(f, atoms)
            ga, gr = l2.restrict_split(g, atoms)
            split = max(split, abs(dfg**2 - l2.d_l2(fa, ga) ** 2 - l2.d_l2(fr, gr) ** 2))
            part = two_block_partition(space.n, atoms)
            xs = manifold.random_point(rng, size=2)
            ys = manifold.random_point(rng, size=2)
            expected = math.fsum(
                space.mass(block) * float(manifold.dist2(x, y)) for block, x, y in zip(part.blocks, xs, ys)
            )
            got = l2.d_l2(l2.simple_embed(space, manifold, part, xs), l2.simple_embed(space, manifold, part, ys)) ** 2
            simple = max(simple, abs(got - expected))

    tol = cfg.tol("metric")
    report.add("symmetry", symmetry, tol)
    report.add("triangle_excess", max(triangle, 0.0), tol)
    report.add("identity", identity, tol)
    report.add("alpha_normalization", alpha_norm, cfg.tol("alpha"))
    report.add("alpha_speed_law", alpha_law, tol)
    report.add("geodesic_speed_law", speed, cfg.tol("speed"))
    report.add("d_eta_bound_excess", max(eta_bound, 0.0), tol)
    report.add("d_eta_complement_identity", eta_split, tol)
    report.add("restrict_split_identity", split, cfg.tol("split"))
    report.add("simple_embed_identity", simple, cfg.tol("split"))
    report.details["trials"] = trials
    return report


def run_angle(cfg: ExperimentConfig) -> Report:
    rng = as_rng(cfg.seed)
    space = cfg.build_space()
    manifold = cfg.build_manifold()
    pairs = int(cfg.param("pairs", 20))
    scales = [float(t) for t in cfg.param("scales", l2.DEFAULT_SCALES)]
    report = Report("angle", cfg.seed, details={"space": space.to_json(), "manifold": manifold.to_json()})

    agreement = monotone = additivity = 0.0
    first_trace = None
    for k in range(pairs):
        f = l2.random_function(space, manifold, rng)
        s1 = l2.geodesic(f, l2.random_function(space, manifold, rng))
        s2 = l2.geodesic(f, l2.random_function(space, manifold, rng))
        estimate = l2.alexandrov_angle_numeric(f, s1, s2, scales)
        analytic = l2.alexandrov_angle_analytic(s1, s2)
        agreement = max(agreement, abs(estimate.angle - analytic))
        small = [abs(row.diff) for row in estimate.trace if row.diff is not None and row.scale <= 1e-2]
        for a, b in zip(small, small[1:]):
            monotone = max(monotone, b - a)
        if isinstance(manifold, Product):
            terms = l2.angle_cosine_terms(s1, s2)
            additivity = max(additivity, abs(math.fsum(terms) - math.cos(analytic)))
        if k == 0:
            first_trace = (estimate, analytic)

    report.add("numeric_vs_analytic", agreement, cfg.tol("angle"))
    report.add("halving_differences_increase", monotone, cfg.tol("monotone"))
    if isinstance(manifold, Product):
        report.add("product_angle_additivity", additivity, cfg.tol("metric"))
    if first_trace is not None:
        estimate, analytic = first_trace
        report.details["trace"] = [
            {"scale": r.scale, "comparison_angle": r.comparison_angle, "analytic_angle": analytic, "diff": r.diff}
            for r in estimate.trace
        ]
        report.details["extrapolated"] = estimate.extrapolated
        if cfg.trace_csv:
            l2.write_angle_trace_csv(cfg.trace_csv, estimate, analytic)
    report.details["pairs"] = pairs
    return report


def run_group(cfg: ExperimentConfig) -> Report:
    rng = as_rng(cfg.seed)
    space = cfg.build_space()
    manifold = cfg.build_manifold()
    trials = int(cfg.param("trials", 20))
    report = Report("group", cfg.seed, details={"space": space.to_json(), "manifold": manifold.to_json()})

    worst = dict.fromkeys(("compose", "inverse", "identity", "associativity", "conjugation", "factorization", "isometric"), 0.0)
    for _ in range(trials):
        g1, g2, g3 = (ig.random_l2_isometry(space, manifold, rng) for _ in range(3))
        tau = [manifold.random_isometry(rng) for _ in range(space.n)]
        f = l2.random_function(space, manifold, rng)
        h = l2.random_function(space, manifold, rng)

        worst["compose"] = max(worst["compose"], _max_gap(ig.apply(ig.compose(g1, g2), f), ig.apply(g1, ig.apply(g2, f))))
        worst["inverse"] = max(worst["inverse"], _max_gap(ig.apply(ig.inverse(g1), ig.apply(g1, f)), f))
        worst["identity"] = max(worst["identity"], _max_gap(ig.apply(ig.compose(g1, ig.inverse(g1)), f), f))
        worst["associativity"] = max(
            worst["associativity"],
            _max_gap(
                ig.apply(ig.compose(ig.compose(g1, g2), g3), f), ig.apply(ig.compose(g1, ig.compose(g2, g3)), f)
            ),
        )
        sigma = ig.pure_pointwise(space, manifold, ig.conjugate_pointwise(g1, tau))
        conj = ig.apply(g1, ig.apply(ig.pure_pointwise(space, manifold, tau), ig.apply(ig.inverse(g1), f)))
        worst["conjugation"] = max(worst["conjugation"], _max_gap(ig.apply(sigma, f), conj))
        (a, b), (c, d) = ig.factorizations(g1)
        direct = ig.apply(g1, f)
        worst["factorization"] = max(
            worst["factorization"],
            _max_gap(ig.apply(ig.compose(a, b), f), direct),
            _max_gap(ig.apply(ig.compose(c, d), f), direct),
        )
        worst["isometric"] = max(
            worst["isometric"], abs(l2.d_l2(ig.apply(g1, f), ig.apply(g1, h)) - l2.d_l2(f, h))
        )

    tol = cfg.tol("group")
    for name, value in worst.items():
        report.add(name, value, tol)

    # Trivial intersection: each pure part decomposes with the other part trivial.
    phi = random_automorphism(space, rng)
    automorphism = ig.decompose(ig.oracle_from_isometry(ig.pure_automorphism(space, manifold, phi)), rng=rng)
    ident = manifold.identity_isometry()
    report.flag("pure_automorphism_has_trivial_rho", all(r.allclose(ident, 1e-8) for r in automorphism.rho))
    pointwise = ig.decompose(
        ig.oracle_from_isometry(ig.pure_pointwise(space, manifold, [manifold.random_isometry(rng) for _ in range(space.n)])),
        rng=rng,
    )
    report.flag("pure_pointwise_has_trivial_phi", pointwise.phi.is_identity)
    report.details["trials"] = trials
    return report


def _nonrigid_oracle(case: str, cfg: ExperimentConfig) -> ig.IsometryOracle:
    m = int(cfg.param("m", 8))
    if case == "hilbert":
        return gallery.hilbert_nonrigid(m)
    if case == "r1":
        return gallery.r1_nonrigid(cfg.build_manifold(), m)
    raise ConfigParse(f"unknown decompose case '{case}'", field="params.case")


def _decompose(oracle: ig.IsometryOracle, cfg: ExperimentConfig, rng) -> ig.Decomposition:
    if cfg.parallel > 1 and oracle.reentrant:
        return asyncio.run(ig.decompose_parallel(oracle, parallel=cfg.parallel, rng=rng))
    return ig.decompose_with_report(oracle, rng=rng)


def run_decompose(cfg: ExperimentConfig) -> Report:
    rng = as_rng(cfg.seed)
    case = cfg.param("case")
    if case is not None:
        oracle = _nonrigid_oracle(case, cfg)
        report = Report("decompose", cfg.seed, details={"case": case, "manifold": oracle.manifold.to_json()})
        report.add("oracle_isometry_defect", oracle.validate(rng, tol=math.inf), cfg.tol("oracle"))
        try:
            _decompose(oracle, cfg, rng)
        except NonRigid as e:
            report.flag("non_rigid_detected", True)
            report.details.update({"reason": e.reason, "atom": e.atom, "message": str(e)})
            report.verdict = "NON_RIGID"
        else:
            report.flag("non_rigid_detected", False)
            report.verdict = "RIGID"
        return report

    space = cfg.build_space()
    manifold = cfg.build_manifold()
    trials = int(cfg.param("trials", 5))
    report = Report("decompose", cfg.seed, details={"space": space.to_json(), "manifold": manifold.to_json()})
    phi_ok = True
    rho_gap = fit = held_out = defect = 0.0
    decompositions = []
    atom_fit = [0.0] * space.n
    for _ in range(trials):
        gamma = ig.random_l2_isometry(space, manifold, rng)
        oracle = ig.oracle_from_isometry(gamma)
        defect = max(defect, oracle.validate(rng, tol=math.inf))
        try:
            result = _decompose(oracle, cfg, rng)
        except NonRigid as e:
            logger.info(f"decomposition of a generated isometry failed: {e}")
            phi_ok = False
            rho_gap = fit = held_out = math.inf
            break
        phi_ok = phi_ok and result.isometry.phi == gamma.phi
        rho_gap = max(
            rho_gap,
            max(_isometry_gap(a, b) for a, b in zip(result.isometry.rho, gamma.rho)),
        )
        fit = max(fit, result.max_rho_residual)
        held_out = max(held_out, result.held_out_residual)
        atom_fit = [max(a, r) for a, r in zip(atom_fit, result.rho_residuals)]
        decompositions.append(result.to_json())

    report.add("oracle_isometry_defect", defect, cfg.tol("oracle"))
    report.flag("permutation_recovered", phi_ok)
    report.add("rho_match", rho_gap, cfg.tol("rho_match"))
    report.add("rho_fit_residual", fit, cfg.tol("held_out"))
    report.add("held_out_residual", held_out, cfg.tol("held_out"))
    report.verdict = "RIGID" if report.passed else "NON_RIGID"
    report.details.update({"trials": trials, "rho_residuals": atom_fit, "decompositions": decompositions})
    return report


def _isometry_gap(a, b) -> float:
    """Largest coefficient difference between two isometry elements of the same kind."""
    flat_a = np.asarray(_flatten(a.to_json()), dtype=float)
    flat_b = np.asarray(_flatten(b.to_json()), dtype=float)
    return float(np.max(np.abs(flat_a - flat_b)))


def _flatten(obj) -> list[float]:
    if isinstance(obj, dict):
        return [x for key in sorted(obj) for x in _flatten(obj[key])]
    if isinstance(obj, (list, tuple)):
        return [x for item in obj for x in _flatten(item)]
    return [float(obj)]


def _control_probes(manifold: Manifold) -> list[tuple[np.ndarray, np.ndarray]]:
    """(0, 0.5 e1) and (0, 3 e1): inside and outside the unit ball."""
    origin = np.zeros(manifold.ambient_dim)
    near = origin.copy()
    near[0] = 0.5
    far = origin.copy()
    far[0] = 3.0
    return [(origin, near), (origin, far)]


def run_eta(cfg: ExperimentConfig) -> Report:
    rng = as_rng(cfg.seed)
    name = str(cfg.param("oracle", "eta_projection")).removeprefix("builtin:").replace("-", "_")
    control = name == "clipped"
    space = cfg.build_space()
    manifold = cfg.build_manifold({"euclidean": {"dim": 2}} if control else DEFAULT_MANIFOLD)
    trials = int(cfg.param("trials", 1))
    expect = cfg.param("expect", "NOT_AFFINE" if control else "AFFINE")
    report = Report(
        cfg.experiment, cfg.seed, details={"oracle": name, "space": space.to_json(), "manifold": manifold.to_json()}
    )

    recovery = deviation = identity = additivity = consistency = excess = 0.0
    lipschitz = metric_defect = 0.0
    etas = []
    for _ in range(trials):
        planted = None
        params = dict(cfg.params)
        if name == "eta_projection" and "eta" not in params:
            planted = rng.uniform(0.0, 2.0, space.n)
            params["eta"] = planted.tolist()
        elif name == "eta_projection":
            planted = np.asarray(params["eta"], dtype=float)
        oracle = affine_maps.builtin_oracle(name, space, manifold, params, rng)
        metric_defect = max(metric_defect, oracle.validate(rng, tol=cfg.tol("pseudo_metric")))

        if control:
            probe_pairs = _control_probes(manifold)
        else:
            probe_pairs = [affine_maps.default_probe_pair(manifold, rng) for _ in range(3)]
        eta = affine_maps.recover_eta(oracle, *probe_pairs[0])
        etas.append(eta.to_json())
        if planted is not None:
            recovery = max(recovery, float(np.max(np.abs(eta.array - planted))))
        deviation = max(deviation, affine_maps.welldefinedness_check(oracle, probe_pairs))
        identity = max(
            identity,
            affine_maps.verify_identity(
                oracle, eta, affine_maps.random_pairs(space, manifold, int(cfg.param("pairs", 100)), rng)
            ),
        )
        if not control:
            bound = affine_maps.additivity_and_bound(oracle, eta, rng=rng, pairs=int(cfg.param("lipschitz_pairs", 500)))
            additivity = max(additivity, bound.additivity_defect)
            consistency = max(consistency, bound.consistency_defect)
            excess = max(excess, bound.bound_excess)
            lipschitz = max(lipschitz, bound.lipschitz)

    report.verdict = affine_maps.affine_verdict(deviation)
    report.flag("verdict_as_expected", report.verdict == expect)
    report.add("pseudo_metric_defect", metric_defect, cfg.tol("pseudo_metric"))
    if control:
        report.add("control_margin", deviation, 1e3 * affine_maps.NOT_AFFINE_THRESHOLD, at_least=True)
        report.add("control_identity_residual", identity, 1e-3, at_least=True)
    else:
        if name == "eta_projection":
            report.add("eta_recovery", recovery, cfg.tol("eta"))
        report.add("probe_independence", deviation, cfg.tol("deviation"))
        report.add("identity_residual", identity, cfg.tol("identity"))
        report.add("additivity", additivity, cfg.tol("additivity"))
        report.add("block_measure_consistency", consistency, cfg.tol("additivity"))
        report.add("lipschitz_bound_excess", excess, cfg.tol("lipschitz"))
        report.details["lipschitz"] = lipschitz
    report.details.update({"eta": etas[0] if etas else None, "deviation": deviation, "trials": trials})
    return report


def _planted_constants(name: str, params: dict, k: int) -> list[float] | None:
    if name == "weighted_product":
        return [float(c) for c in params.get("c", [1.0, 0.5])]
    if name == "dilation":
        return [float(params.get("a", 2.0))] * k
    if name == "factor_projection":
        return [1.0 if i == params.get("index", 0) else 0.0 for i in range(k)]
    if name == "identity":
        return [1.0] * k
    return None


def run_factors(cfg: ExperimentConfig) -> Report:
    rng = as_rng(cfg.seed)
    space = cfg.build_space({"weights": [1.0]})
    manifold = cfg.build_manifold(SPHERE_PAIR)
    name = str(cfg.param("oracle", "weighted_product")).removeprefix("builtin:").replace("-", "_")
    oracle = affine_maps.builtin_oracle(name, space, manifold, cfg.params, rng)
    report = Report("factors", cfg.seed, details={"oracle": name, "manifold": manifold.to_json()})
    report.add("pseudo_metric_defect", oracle.validate(rng, tol=cfg.tol("pseudo_metric")), cfg.tol("pseudo_metric"))
    try:
        result = affine_maps.factor_constants(oracle, rng=rng, pairs=int(cfg.param("pairs", 100)))
    except L2ManError as e:
        report.flag("constants_consistent", False)
        report.details["error"] = str(e)
        return report
    report.flag("constants_consistent", True)
    report.add("mixed_identity_residual", result.residual, cfg.tol("mixed"))
    planted = _planted_constants(name, cfg.params, len(manifold.factors))
    if planted is not None:
        report.add("planted_constants", float(np.max(np.abs(np.array(result.constants) - planted))), cfg.tol("factors"))
    report.details["constants"] = list(result.constants)
    return report


def _interleave_checks(report: Report, base: Manifold, k: int, m: int, pairs: int, rng, tol: float) -> None:
    space = uniform_interval(m)
    manifold = power(base, k)
    gap = 0.0
    round_trip = True
    for _ in range(pairs):
        f = l2.random_function(space, manifold, rng)
        g = l2.random_function(space, manifold, rng)
        gap = max(gap, abs(l2.d_l2(f, g) - l2.d_l2(gallery.interleave(f), gallery.interleave(g))))
        back = gallery.deinterleave(gallery.interleave(f), k)
        round_trip = round_trip and back.space == f.space and bool(np.array_equal(back.points, f.points))
    report.add(f"distance_preserved[k={k},m={m}]", gap, tol)
    report.flag(f"round_trip[k={k},m={m}]", round_trip)


def run_interleave(cfg: ExperimentConfig) -> Report:
    rng = as_rng(cfg.seed)
    base = cfg.build_manifold()
    ks = [int(k) for k in cfg.param("ks", [2, 3])]
    ms = [int(m) for m in cfg.param("ms", [6, 12])]
    pairs = int(cfg.param("pairs", 20))
    report = Report("interleave", cfg.seed, details={"manifold": base.to_json(), "ks": ks, "ms": ms})
    for k in ks:
        for m in ms:
            _interleave_checks(report, base, k, m, pairs, rng, cfg.tol("interleave"))
    return report


def run_dilation(cfg: ExperimentConfig) -> Report:
    rng = as_rng(cfg.seed)
    factor = float(cfg.param("lambda", 2.0))
    specs = cfg.param("manifolds", [{"euclidean": {"dim": 3}}, {"sphere": {"dim": 2}}, {"hyperbolic": {"dim": 2}}])
    report = Report("dilation", cfg.seed, details={"lambda": factor})
    admitted = []
    for spec in specs:
        manifold = manifold_from_json(spec)
        label = next(iter(spec))
        try:
            dilation = manifold.scaling_map(factor)
        except UnsupportedVariant:
            report.flag(f"rejected[{label}]", not isinstance(manifold, Euclidean))
            continue
        admitted.append(label)
        report.flag(f"admitted[{label}]", isinstance(manifold, Euclidean))
        x = manifold.random_point(rng, size=50)
        y = manifold.random_point(rng, size=50)
        ratio = np.abs(manifold.dist(dilation(x), dilation(y)) - factor * manifold.dist(x, y))
        report.add(f"dilation_ratio[{label}]", float(np.max(ratio)), cfg.tol("dilation"))
        back = np.abs(dilation.inverse()(dilation(x)) - x)
        report.add(f"surjective[{label}]", float(np.max(back)), cfg.tol("dilation"))
        report.flag(f"unit_is_isometry[{label}]", manifold.scaling_map(1.0).is_isometry)
    report.details["admitted"] = admitted
    return report


def _gallery_hilbert(cfg: ExperimentConfig, report: Report, rng) -> None:
    m = int(cfg.param("m", 8))
    oracle = gallery.hilbert_nonrigid(m)
    report.add("isometry_defect", oracle.validate(rng, tol=math.inf), 1e-10)
    e, e_prime = gallery.hilbert_unit_vectors(m)
    space = uniform_interval(m)
    image = oracle(l2.L2Function(space, Euclidean(1), e[:, None]))
    report.add("maps_e_to_e_prime", float(np.max(np.abs(image.points[:, 0] - e_prime))), cfg.tol("hilbert"))
    first_half = list(range(m // 2))
    loc = ig.localization_check(oracle, first_half, gallery.hilbert_probes(m, rng))
    report.flag("localization_fails", not loc.ok)
    report.add("left_value", abs(loc.left - 1.0), cfg.tol("hilbert"))
    report.add("right_value", abs(loc.right - 0.5), cfg.tol("hilbert"))
    try:
        ig.decompose(oracle, rng=rng)
        report.flag("decompose_non_rigid", False)
    except NonRigid as e:
        report.flag("decompose_non_rigid", True)
        report.details["reason"] = e.reason
    report.verdict = "NON_RIGID"
    report.details.update({"m": m, "witness": first_half, "left": loc.left, "right": loc.right})


def _gallery_r1(cfg: ExperimentConfig, report: Report, rng) -> None:
    m = int(cfg.param("m", 8))
    base = cfg.build_manifold()
    oracle = gallery.r1_nonrigid(base, m)
    report.add("isometry_defect", oracle.validate(rng, tol=math.inf), 1e-10)
    x, y = base.random_point(rng), base.random_point(rng)
    manifold = power(base, 2)
    image = oracle(l2.constant_function(uniform_interval(m), manifold, manifold.join([x, y])))
    expected = np.concatenate([np.tile(np.concatenate([x, x]), (m // 2, 1)), np.tile(np.concatenate([y, y]), (m // 2, 1))])
    report.flag("two_block_image", bool(np.array_equal(image.points, expected)))
    identity = gallery.r1_nonrigid(base, m, swap=False)
    f = l2.random_function(uniform_interval(m), manifold, rng)
    report.flag("unswapped_is_identity", bool(np.array_equal(identity(f).points, f.points)))
    try:
        ig.decompose(oracle, rng=rng)
        report.flag("decompose_non_rigid", False)
    except NonRigid as e:
        report.flag("decompose_non_rigid", True)
        report.details["reason"] = e.reason
    report.verdict = "NON_RIGID"
    report.details["m"] = m


def _gallery_product(cfg: ExperimentConfig, report: Report, rng) -> None:
    space = cfg.build_space()
    manifold = cfg.build_manifold(SPHERE_PAIR)
    gap = 0.0
    round_trip = True
    for _ in range(int(cfg.param("pairs", 20))):
        f = l2.random_function(space, manifold, rng)
        g = l2.random_function(space, manifold, rng)
        f1, f2 = gallery.product_factorize(f)
        g1, g2 = gallery.product_factorize(g)
        gap = max(gap, abs(l2.d_l2(f, g) ** 2 - l2.d_l2(f1, g1) ** 2 - l2.d_l2(f2, g2) ** 2))
        round_trip = round_trip and bool(np.array_equal(gallery.product_unfactorize(f1, f2).points, f.points))
    report.add("distance_identity", gap, cfg.tol("split"))
    report.flag("round_trip", round_trip)


def _gallery_semidirect(cfg: ExperimentConfig, report: Report, rng, case: str) -> None:
    space = cfg.build_space()
    manifold = cfg.build_manifold()
    if case == "automorphism":
        oracle = gallery.automorphism_oracle(space, manifold, random_automorphism(space, rng))
    else:
        oracle = gallery.pointwise_rotation_oracle(space, manifold, rng=rng)
    try:
        result = ig.decompose_with_report(oracle, rng=rng)
    except NonRigid as e:
        report.flag("decomposed", False)
        report.details["reason"] = e.reason
        report.verdict = "NON_RIGID"
        return
    report.flag("decomposed", True)
    report.add("held_out_residual", result.held_out_residual, cfg.tol("held_out"))
    report.verdict = "RIGID"


def run_gallery(cfg: ExperimentConfig) -> Report:
    rng = as_rng(cfg.seed)
    case = cfg.param("case", "hilbert")
    if case not in GALLERY_CASES:
        raise ConfigParse(f"unknown gallery case '{case}'; known: {', '.join(GALLERY_CASES)}", field="params.case")
    report = Report("gallery", cfg.seed, details={"case": case})
    if case == "hilbert":
        _gallery_hilbert(cfg, report, rng)
    elif case == "r1":
        _gallery_r1(cfg, report, rng)
    elif case == "interleave":
        m = int(cfg.param("m", 8))
        _interleave_checks(report, cfg.build_manifold(), 2, m, int(cfg.param("pairs", 20)), rng, cfg.tol("interleave"))
    elif case == "product":
        _gallery_product(cfg, report, rng)
    else:
        _gallery_semidirect(cfg, report, rng, case)
    return report


RUNNERS: dict[str, Callable[[ExperimentConfig], Report]] = {
    "space": run_space,
    "metric": run_metric,
    "angle": run_angle,
    "group": run_group,
    "decompose": run_decompose,
    "eta-recover": run_eta,
    "affine": run_eta,
    "factors": run_factors,
    "interleave": run_interleave,
    "dilation": run_dilation,
    "gallery": run_gallery,
}


def run_experiment(cfg: ExperimentConfig) -> Report:
    """Run one experiment. Library failures become a failed `error` check.

    ConfigParse is raised, not reported.
    """
    if cfg.experiment == "suite":
        return asyncio.run(run_suite(cfg.seed, cfg.parallel))
    runner = RUNNERS[cfg.experiment]
    label = cfg.label or cfg.experiment
    logger.info(f"running {label} (seed {cfg.seed})")
    try:
        report = runner(cfg)
    except ConfigParse:
        raise
    except L2ManError as e:
        logger.warning(f"{label} failed: {type(e).__name__}: {e}")
        report = Report(cfg.experiment, cfg.seed, details={"error": f"{type(e).__name__}: {e}"})
        report.flag("error", False)
    if cfg.label:
        report.details["label"] = cfg.label
    logger.info(f"{label}: {'pass' if report.passed else 'FAIL'}" + (f" ({report.verdict})" if report.verdict else ""))
    return report


# ---------------------------------------------------------------------------
# Acceptance suite
# ---------------------------------------------------------------------------


def suite_configs(seed: int = 0) -> list[ExperimentConfig]:
    """The acceptance battery, one config per independent experiment."""
    configs: list[ExperimentConfig] = []
    manifolds = {"sphere2": {"sphere": {"dim": 2}}, "hyperbolic2": {"hyperbolic": {"dim": 2}}, "euclidean3": {"euclidean": {"dim": 3}}}
    mixed = {"weights": [0.125, 0.125, 0.25, 0.25, 0.0625, 0.1875]}

    for n in (1, 2, 6, 12):
        configs.append(ExperimentConfig("space", {"uniform": n}, label=f"space[n={n}]"))
        for name, spec in manifolds.items():
            configs.append(
                ExperimentConfig("metric", {"uniform": n}, spec, params={"trials": 84}, label=f"metric[{name},n={n}]")
            )
    configs.append(ExperimentConfig("space", mixed, label="space[mixed]"))
    configs.append(ExperimentConfig("metric", mixed, SPHERE_PAIR, params={"trials": 50}, label="metric[product]"))

    for name in ("sphere2", "hyperbolic2"):
        for space in ({"uniform": 4}, {"uniform": 16}):
            configs.append(
                ExperimentConfig("angle", space, manifolds[name], params={"pairs": 50}, label=f"angle[{name},n={space['uniform']}]")
            )
    configs.append(ExperimentConfig("angle", {"uniform": 4}, SPHERE_PAIR, params={"pairs": 20}, label="angle[product]"))

    for name in ("sphere2", "hyperbolic2"):
        configs.append(ExperimentConfig("group", {"uniform": 6}, manifolds[name], params={"trials": 50}, label=f"group[{name}]"))
        for space, label in (({"uniform": 12}, "uniform12"), (mixed, "mixed6")):
            configs.append(
                ExperimentConfig("decompose", space, manifolds[name], params={"trials": 25}, label=f"decompose[{name},{label}]")
            )

    configs.append(ExperimentConfig("eta-recover", {"uniform": 8}, params={"trials": 50}, label="eta[eta_projection]"))
    for oracle in ("identity", "restriction", "constant", "dilation"):
        configs.append(ExperimentConfig("eta-recover", {"uniform": 6}, params={"oracle": oracle}, label=f"eta[{oracle}]"))
    configs.append(
        ExperimentConfig("eta-recover", {"uniform": 6}, {"euclidean": {"dim": 2}}, params={"oracle": "clipped"}, label="eta[clipped]")
    )

    for oracle, params in (("weighted_product", {"c": [1.0, 0.5]}), ("factor_projection", {"index": 0}), ("dilation", {"a": 1.5})):
        configs.append(
            ExperimentConfig("factors", params={"oracle": oracle, "pairs": 100, **params}, label=f"factors[{oracle}]")
        )

    configs.append(ExperimentConfig("interleave", params={"pairs": 25}, label="interleave"))
    configs.append(ExperimentConfig("dilation", label="dilation"))
    for case in ("hilbert", "r1", "product", "automorphism", "pointwise"):
        configs.append(ExperimentConfig("gallery", params={"case": case}, label=f"gallery[{case}]"))

    return [replace(cfg, seed=seed + k) for k, cfg in enumerate(configs)]


async def run_configs(configs: Sequence[ExperimentConfig], parallel: int = 1) -> list[Report]:
    """Run independent experiments in a bounded worker pool, in config order."""
    semaphore = asyncio.Semaphore(max(1, parallel))

    async def _one(cfg: ExperimentConfig) -> Report:
        async with semaphore:
            return await asyncio.to_thread(run_experiment, cfg)

    return list(await asyncio.gather(*(_one(cfg) for cfg in configs)))


async def run_suite(seed: int = 0, parallel: int = 1) -> Report:
    configs = suite_configs(seed)
    logger.info(f"suite: {len(configs)} experiments, {parallel} worker(s)")
    reports = await run_configs(configs, parallel)
    suite = Report("suite", seed)
    summary = []
    for cfg, report in zip(configs, reports):
        label = cfg.label or cfg.experiment
        for check in report.checks:
            suite.checks.append(replace(check, name=f"{label}/{check.name}"))
        summary.append({"label": label, "passed": report.passed, "verdict": report.verdict})
    suite.details["experiments"] = summary
    return suite

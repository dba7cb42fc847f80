"""Tests for (automorphism, pointwise isometry) pairs and the rigidity decomposition."""

import math

import numpy as np
import pytest

from l2man import gallery
from l2man import isometry_group as ig
from l2man.errors import (
    ArityMismatch,
    DegenerateProbe,
    EmptyOrFullSubset,
    InsufficientProbes,
    NonRigid,
    NotAnIsometry,
    NotBijective,
    NotReentrant,
    SpaceMismatch,
)
from l2man.l2_space import L2Function, constant_function, d_l2, random_function
from l2man.manifolds import Euclidean, Hyperbolic, Product, Sphere
from l2man.measure_space import Automorphism, make_prob_space, uniform_interval

NORTH = np.array([0.0, 0.0, 1.0])
EAST = np.array([1.0, 0.0, 0.0])


def _make_space():
    return make_prob_space([0.25, 0.125, 0.25, 0.125, 0.25])


def _make_isometry(rng, manifold=None, space=None):
    return ig.random_l2_isometry(space or _make_space(), manifold or Sphere(2), rng)


def _make_scaling_oracle(space, factor=2.0):
    manifold = Euclidean(2)

    def forward(f):
        return L2Function(f.space, f.manifold, factor * f.points)

    return ig.IsometryOracle(forward, space, manifold, name="scale")


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

class TestMakeIsometry:
    def test_valid(self, rng):
        s = Sphere(2)
        space = _make_space()
        rho = [s.random_isometry(rng) for _ in range(space.n)]
        gamma = ig.make_l2_isometry(space, s, [2, 1, 0, 3, 4], rho)
        assert gamma.phi == Automorphism((2, 1, 0, 3, 4))

    def test_weight_changing_permutation(self, rng):
        s = Sphere(2)
        space = _make_space()
        rho = [s.identity_isometry()] * space.n
        with pytest.raises(NotBijective):
            ig.make_l2_isometry(space, s, [1, 0, 2, 3, 4], rho)

    def test_arity(self, rng):
        s = Sphere(2)
        with pytest.raises(ArityMismatch):
            ig.make_l2_isometry(_make_space(), s, [0, 1, 2, 3, 4], [s.identity_isometry()])

    def test_json_round_trip(self, rng):
        gamma = _make_isometry(rng)
        back = ig.l2_isometry_from_json(gamma.space, gamma.manifold, gamma.to_json())
        assert back.allclose(gamma)


# ---------------------------------------------------------------------------
# Group structure
# ---------------------------------------------------------------------------

class TestApply:
    def test_pure_automorphism_precomposes(self):
        s = Sphere(2)
        space = uniform_interval(2)
        gamma = ig.pure_automorphism(space, s, Automorphism((1, 0)))
        f = L2Function(space, s, np.stack([NORTH, EAST]))
        out = ig.apply(gamma, f)
        assert np.allclose(out.points, np.stack([EAST, NORTH]))

    def test_pure_pointwise(self):
        s = Sphere(2)
        space = uniform_interval(2)
        quarter = s.rotation_about_axis(2, math.pi / 2)
        gamma = ig.pure_pointwise(space, s, [quarter, s.identity_isometry()])
        f = constant_function(space, s, EAST)
        out = ig.apply(gamma, f)
        assert np.allclose(out.points[0], quarter.apply(EAST))
        assert np.allclose(out.points[1], EAST)

    def test_preserves_distance(self, rng):
        gamma = _make_isometry(rng)
        f = random_function(gamma.space, gamma.manifold, rng)
        g = random_function(gamma.space, gamma.manifold, rng)
        assert d_l2(ig.apply(gamma, f), ig.apply(gamma, g)) == pytest.approx(d_l2(f, g), abs=1e-12)

    def test_space_mismatch(self, rng):
        gamma = _make_isometry(rng)
        f = random_function(uniform_interval(5), Sphere(2), rng)
        with pytest.raises(SpaceMismatch):
            ig.apply(gamma, f)


class TestGroupLaws:
    @pytest.mark.parametrize("manifold", [Sphere(2), Hyperbolic(2), Product((Sphere(2), Euclidean(2)))])
    def test_compose_is_double_application(self, manifold, rng):
        g1 = _make_isometry(rng, manifold)
        g2 = _make_isometry(rng, manifold)
        f = random_function(g1.space, manifold, rng)
        direct = ig.apply(ig.compose(g1, g2), f)
        twice = ig.apply(g1, ig.apply(g2, f))
        assert direct.allclose(twice, 1e-9)

    @pytest.mark.parametrize("manifold", [Sphere(2), Hyperbolic(2)])
    def test_inverse(self, manifold, rng):
        gamma = _make_isometry(rng, manifold)
        f = random_function(gamma.space, manifold, rng)
        assert ig.apply(ig.inverse(gamma), ig.apply(gamma, f)).allclose(f, 1e-9)
        both = ig.compose(gamma, ig.inverse(gamma))
        assert both.phi.is_identity
        assert both.allclose(ig.identity_l2_isometry(gamma.space, manifold), 1e-9)

    def test_associative(self, rng):
        g1, g2, g3 = (_make_isometry(rng) for _ in range(3))
        left = ig.compose(ig.compose(g1, g2), g3)
        right = ig.compose(g1, ig.compose(g2, g3))
        assert left.allclose(right, 1e-9)

    def test_conjugation_is_pointwise(self, rng):
        s = Sphere(2)
        gamma = _make_isometry(rng, s)
        tau = [s.random_isometry(rng) for _ in range(gamma.n)]
        sigma = ig.conjugate_pointwise(gamma, tau)
        conjugated = ig.compose(ig.compose(gamma, ig.pure_pointwise(gamma.space, s, tau)), ig.inverse(gamma))
        assert conjugated.phi.is_identity
        assert conjugated.allclose(ig.pure_pointwise(gamma.space, s, sigma), 1e-9)

    def test_conjugation_by_automorphism_permutes(self, rng):
        s = Sphere(2)
        space = _make_space()
        phi = Automorphism((2, 3, 4, 1, 0))
        gamma = ig.pure_automorphism(space, s, phi)
        tau = [s.random_isometry(rng) for _ in range(space.n)]
        sigma = ig.conjugate_pointwise(gamma, tau)
        assert all(sigma[i].allclose(tau[phi(i)], 1e-12) for i in range(space.n))

    def test_conjugation_arity(self, rng):
        gamma = _make_isometry(rng)
        with pytest.raises(ArityMismatch):
            ig.conjugate_pointwise(gamma, [Sphere(2).identity_isometry()])

    def test_factorizations(self, rng):
        gamma = _make_isometry(rng, Hyperbolic(2))
        (auto, point), (shifted, auto2) = ig.factorizations(gamma)
        assert ig.compose(auto, point).allclose(gamma, 1e-9)
        assert ig.compose(shifted, auto2).allclose(gamma, 1e-9)
        assert point.phi.is_identity and shifted.phi.is_identity


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

class TestOracle:
    def test_validate_isometry(self, rng):
        oracle = ig.oracle_from_isometry(_make_isometry(rng))
        assert oracle.validate(rng, pairs=10) <= 1e-9

    def test_validate_rejects_scaling(self, rng):
        with pytest.raises(NotAnIsometry):
            _make_scaling_oracle(uniform_interval(3)).validate(rng, pairs=5)


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------

class TestDecompose:
    @pytest.mark.parametrize(
        "manifold", [Sphere(2), Sphere(3), Hyperbolic(2), Product((Sphere(2), Hyperbolic(2)))]
    )
    def test_round_trip(self, manifold, rng):
        gamma = _make_isometry(rng, manifold)
        result = ig.decompose_with_report(ig.oracle_from_isometry(gamma), rng=rng)
        assert result.isometry.phi == gamma.phi
        assert result.isometry.allclose(gamma, 1e-8)
        assert result.max_rho_residual <= 1e-9
        assert result.held_out_residual <= 1e-8

    def test_identity(self, rng):
        s = Sphere(2)
        space = uniform_interval(4)
        found = ig.decompose(ig.oracle_from_isometry(ig.identity_l2_isometry(space, s)), rng=rng)
        assert found.phi.is_identity
        assert all(g.allclose(s.identity_isometry(), 1e-9) for g in found.rho)

    def test_explicit_basepoints(self, rng):
        s = Sphere(2)
        gamma = _make_isometry(rng, s)
        found = ig.decompose(ig.oracle_from_isometry(gamma), NORTH, EAST, rng=rng)
        assert found.allclose(gamma, 1e-8)

    def test_coincident_basepoints(self, rng):
        oracle = ig.oracle_from_isometry(_make_isometry(rng))
        with pytest.raises(DegenerateProbe):
            ig.decompose(oracle, NORTH, NORTH, rng=rng)

    def test_product_counterexample_is_not_rigid(self, rng):
        with pytest.raises(NonRigid) as exc:
            ig.decompose(gallery.r1_nonrigid(Sphere(2), 8), rng=rng)
        assert exc.value.reason == "spread"

    def test_hilbert_rotation_is_not_rigid(self, rng):
        with pytest.raises(NonRigid):
            ig.decompose(gallery.hilbert_nonrigid(8), rng=rng)

    async def test_parallel_matches_sequential(self, rng):
        gamma = _make_isometry(rng, Hyperbolic(2))
        oracle = ig.oracle_from_isometry(gamma)
        result = await ig.decompose_parallel(oracle, rng=np.random.default_rng(5), parallel=3)
        sequential = ig.decompose_with_report(oracle, rng=np.random.default_rng(5))
        assert result.isometry.phi == sequential.isometry.phi == gamma.phi
        assert result.isometry.allclose(sequential.isometry, 1e-12)

    async def test_parallel_needs_reentrant_oracle(self, rng):
        gamma = _make_isometry(rng)
        oracle = ig.IsometryOracle(lambda f: ig.apply(gamma, f), gamma.space, gamma.manifold)
        with pytest.raises(NotReentrant):
            await ig.decompose_parallel(oracle, rng=rng)


# ---------------------------------------------------------------------------
# Localization
# ---------------------------------------------------------------------------

def _make_probes(space, manifold, rng, count):
    return [(random_function(space, manifold, rng), random_function(space, manifold, rng)) for _ in range(count)]


class TestLocalization:
    def test_semidirect_localizes_to_preimage(self, rng):
        s = Sphere(2)
        space = uniform_interval(6)
        gamma = ig.random_l2_isometry(space, s, rng)
        atoms = [0, 2]
        result = ig.localization_check(ig.oracle_from_isometry(gamma), atoms, _make_probes(space, s, rng, 12))
        expected = tuple(sorted(i for i in range(space.n) if gamma.phi(i) in atoms))
        assert result.ok
        assert result.witness == expected
        assert result.max_deviation <= 1e-8

    def test_full_set(self, rng):
        s = Sphere(2)
        space = uniform_interval(4)
        gamma = ig.random_l2_isometry(space, s, rng)
        result = ig.localization_check(ig.oracle_from_isometry(gamma), range(4), _make_probes(space, s, rng, 8))
        assert result.ok
        assert result.witness == (0, 1, 2, 3)

    def test_hilbert_rotation_fails(self, rng):
        m = 8
        oracle = gallery.hilbert_nonrigid(m)
        result = ig.localization_check(oracle, range(m // 2), gallery.hilbert_probes(m, rng))
        assert not result.ok
        assert result.witness is None
        assert result.left == pytest.approx(1.0, abs=1e-12)
        assert result.right == pytest.approx(0.5, abs=1e-12)

    def test_insufficient_probes(self, rng):
        s = Sphere(2)
        space = uniform_interval(4)
        oracle = ig.oracle_from_isometry(ig.identity_l2_isometry(space, s))
        with pytest.raises(InsufficientProbes):
            ig.localization_check(oracle, [0], _make_probes(space, s, rng, 3))

    def test_empty_set(self, rng):
        s = Sphere(2)
        space = uniform_interval(4)
        oracle = ig.oracle_from_isometry(ig.identity_l2_isometry(space, s))
        with pytest.raises(EmptyOrFullSubset):
            ig.localization_check(oracle, [], _make_probes(space, s, rng, 8))

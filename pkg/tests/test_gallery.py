"""Tests for the interleaving isomorphism and the non-rigid counterexamples."""

import math

import numpy as np
import pytest

from l2man import gallery
from l2man.errors import DivisibilityError, ManifoldMismatch, NotAProduct
from l2man.isometry_group import decompose
from l2man.l2_space import L2Function, constant_function, d_l2, random_function
from l2man.manifolds import Euclidean, Hyperbolic, Product, Scaled, Sphere, power
from l2man.measure_space import Automorphism, uniform_interval


def _make_pair_constant(base, rng, m=8):
    x, y = base.random_point(rng), base.random_point(rng)
    return x, y, constant_function(uniform_interval(m), power(base, 2), np.concatenate([x, y]))


def _norm(f: L2Function) -> float:
    return d_l2(f, L2Function(f.space, f.manifold, np.zeros_like(f.points)))


# ---------------------------------------------------------------------------
# Interleaving
# ---------------------------------------------------------------------------

class TestInterleave:
    def test_constant_pair(self, rng):
        s = Sphere(2)
        x, y, f = _make_pair_constant(s, rng, m=6)
        h = gallery.interleave(f)
        assert h.space == uniform_interval(12)
        assert h.manifold == Scaled(math.sqrt(2), s)
        assert np.allclose(h.points[:6], x)
        assert np.allclose(h.points[6:], y)

    @pytest.mark.parametrize("k", [2, 3])
    def test_preserves_distance(self, k, rng):
        m = power(Hyperbolic(2), k)
        space = uniform_interval(6)
        f, g = random_function(space, m, rng), random_function(space, m, rng)
        assert d_l2(gallery.interleave(f), gallery.interleave(g)) == pytest.approx(d_l2(f, g), abs=1e-12)

    @pytest.mark.parametrize("k", [2, 3])
    def test_round_trip(self, k, rng):
        f = random_function(uniform_interval(4), power(Sphere(2), k), rng)
        assert gallery.deinterleave(gallery.interleave(f), k).allclose(f, 0.0)

    def test_needs_identical_factors(self, rng):
        f = random_function(uniform_interval(4), Product((Sphere(2), Euclidean(3))), rng)
        with pytest.raises(NotAProduct):
            gallery.interleave(f)

    def test_indivisible_grid(self, rng):
        h = random_function(uniform_interval(7), Scaled(math.sqrt(2), Sphere(2)), rng)
        with pytest.raises(DivisibilityError):
            gallery.deinterleave(h, 2)

    def test_wrong_scale(self, rng):
        h = random_function(uniform_interval(8), Scaled(2.0, Sphere(2)), rng)
        with pytest.raises(ManifoldMismatch):
            gallery.deinterleave(h, 2)


# ---------------------------------------------------------------------------
# Product counterexample
# ---------------------------------------------------------------------------

class TestProductCounterexample:
    def test_quarter_swap(self):
        assert gallery.quarter_swap(8) == Automorphism((0, 1, 4, 5, 2, 3, 6, 7))

    def test_quarter_swap_divisibility(self):
        with pytest.raises(DivisibilityError):
            gallery.quarter_swap(6)
        with pytest.raises(DivisibilityError):
            gallery.r1_nonrigid(Sphere(2), 6)

    def test_constant_becomes_two_blocks(self, rng):
        s = Sphere(2)
        x, y, f = _make_pair_constant(s, rng, m=8)
        out = gallery.r1_nonrigid(s, 8)(f)
        first, second = gallery.product_factorize(out)
        assert np.allclose(first.points[:4], x) and np.allclose(second.points[:4], x)
        assert np.allclose(first.points[4:], y) and np.allclose(second.points[4:], y)

    def test_is_isometry(self, rng):
        oracle = gallery.r1_nonrigid(Hyperbolic(2), 8)
        assert oracle.validate(rng, pairs=10) <= 1e-9

    def test_identity_variant(self, rng):
        s = Sphere(2)
        f = random_function(uniform_interval(8), power(s, 2), rng)
        assert gallery.r1_nonrigid(s, 8, swap=False)(f).allclose(f, 1e-15)


# ---------------------------------------------------------------------------
# Hilbert-space counterexample
# ---------------------------------------------------------------------------

class TestHilbertCounterexample:
    def test_unit_vectors(self):
        e, e_prime = gallery.hilbert_unit_vectors(8)
        assert np.mean(e**2) == pytest.approx(1.0)
        assert np.mean(e_prime**2) == pytest.approx(1.0)

    def test_odd_grid(self):
        with pytest.raises(DivisibilityError):
            gallery.hilbert_unit_vectors(7)

    def test_sends_e_to_e_prime(self):
        m = 8
        e, e_prime = gallery.hilbert_unit_vectors(m)
        oracle = gallery.hilbert_nonrigid(m)
        out = oracle(L2Function(uniform_interval(m), Euclidean(1), e[:, None]))
        assert np.allclose(out.points[:, 0], e_prime, atol=1e-12)

    def test_preserves_norm(self, rng):
        m = 10
        oracle = gallery.hilbert_nonrigid(m)
        for _ in range(10):
            f = L2Function(uniform_interval(m), Euclidean(1), rng.standard_normal((m, 1)))
            assert _norm(oracle(f)) == pytest.approx(_norm(f), abs=1e-12)

    def test_probes(self, rng):
        probes = gallery.hilbert_probes(6, rng)
        assert len(probes) == 12
        assert np.allclose(probes[0][1].points, 0.0)


# ---------------------------------------------------------------------------
# Rigid cases
# ---------------------------------------------------------------------------

class TestRigidCases:
    def test_automorphism_oracle(self, rng):
        s = Sphere(2)
        space = uniform_interval(6)
        phi = Automorphism((1, 2, 0, 4, 5, 3))
        found = decompose(gallery.automorphism_oracle(space, s, phi), rng=rng)
        assert found.phi == phi

    def test_pointwise_oracle(self, rng):
        h = Hyperbolic(2)
        space = uniform_interval(4)
        rho = [h.random_isometry(rng) for _ in range(4)]
        found = decompose(gallery.pointwise_rotation_oracle(space, h, rho), rng=rng)
        assert found.phi.is_identity
        assert all(a.allclose(b, 1e-8) for a, b in zip(found.rho, rho))

    def test_product_factorize_round_trip(self, rng):
        f = random_function(uniform_interval(5), power(Sphere(2), 2), rng)
        first, second = gallery.product_factorize(f)
        assert gallery.product_unfactorize(first, second).allclose(f, 0.0)

    def test_product_factorize_needs_two_factors(self, rng):
        f = random_function(uniform_interval(3), power(Sphere(2), 3), rng)
        with pytest.raises(NotAProduct):
            gallery.product_factorize(f)

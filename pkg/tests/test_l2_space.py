"""Tests for L2 functions, the L2 metric, geodesics, angles and splittings."""

import csv
import math

import numpy as np
import pytest

from l2man import l2_space as l2
from l2man.errors import (
    ArityMismatch,
    EmptyOrFullSubset,
    IdenticalEndpoints,
    InvalidPoint,
    LengthMismatch,
    ManifoldMismatch,
    MismatchedBasepoint,
    NonUniqueGeodesic,
    NotAProduct,
    OutOfRange,
    SpaceMismatch,
)
from l2man.manifolds import Euclidean, Hyperbolic, Product, Sphere, power
from l2man.measure_space import (
    constant_density,
    indicator_density,
    make_density,
    make_partition,
    make_prob_space,
    trivial_partition,
    uniform_interval,
)

NORTH = np.array([0.0, 0.0, 1.0])
EAST = np.array([1.0, 0.0, 0.0])
WEST = np.array([0.0, 1.0, 0.0])


def _make_pair(space=None, manifold=None, rng=None):
    space = space or uniform_interval(6)
    manifold = manifold or Sphere(2)
    return l2.random_function(space, manifold, rng), l2.random_function(space, manifold, rng)


def _make_mixed_space():
    return make_prob_space([0.125, 0.125, 0.25, 0.25, 0.0625, 0.1875])


# ---------------------------------------------------------------------------
# Functions and metrics
# ---------------------------------------------------------------------------

class TestFunctions:
    def test_make_function_validates(self):
        space = uniform_interval(2)
        with pytest.raises(InvalidPoint):
            l2.make_function(space, Sphere(2), [[1.0, 1.0, 0.0], NORTH])
        with pytest.raises(LengthMismatch):
            l2.make_function(space, Sphere(2), [NORTH])

    def test_json_round_trip(self, rng):
        f, _ = _make_pair(rng=rng)
        back = l2.function_from_json(f.to_json())
        assert back.allclose(f, 0.0)

    def test_with_atom(self, rng):
        f, _ = _make_pair(rng=rng)
        g = l2.with_atom(f, 2, NORTH)
        assert np.array_equal(g.points[2], NORTH)
        assert np.array_equal(np.delete(g.points, 2, axis=0), np.delete(f.points, 2, axis=0))


class TestDL2:
    def test_same_function(self, rng):
        f, _ = _make_pair(rng=rng)
        assert l2.d_l2(f, f) == 0.0

    def test_constants_give_manifold_distance(self, rng):
        s = Sphere(2)
        x, y = s.random_point(rng), s.random_point(rng)
        space = _make_mixed_space()
        d = l2.d_l2(l2.constant_function(space, s, x), l2.constant_function(space, s, y))
        assert d == pytest.approx(float(s.dist(x, y)), abs=1e-12)

    def test_single_atom_moves(self):
        space = uniform_interval(2)
        s = Sphere(2)
        f = l2.make_function(space, s, [NORTH, NORTH])
        g = l2.make_function(space, s, [EAST, NORTH])
        assert l2.d_l2(f, g) == pytest.approx((math.pi / 2) / math.sqrt(2), abs=1e-12)

    def test_space_mismatch(self, rng):
        f, _ = _make_pair(uniform_interval(3), rng=rng)
        g, _ = _make_pair(uniform_interval(4), rng=rng)
        with pytest.raises(SpaceMismatch):
            l2.d_l2(f, g)

    def test_manifold_mismatch(self, rng):
        f, _ = _make_pair(manifold=Sphere(2), rng=rng)
        g, _ = _make_pair(manifold=Hyperbolic(2), rng=rng)
        with pytest.raises(ManifoldMismatch):
            l2.d_l2(f, g)

    @pytest.mark.parametrize("manifold", [Sphere(2), Hyperbolic(2), Euclidean(3)])
    def test_triangle_inequality(self, manifold, rng):
        space = _make_mixed_space()
        for _ in range(50):
            f, g = _make_pair(space, manifold, rng)
            h = l2.random_function(space, manifold, rng)
            assert l2.d_l2(f, h) <= l2.d_l2(f, g) + l2.d_l2(g, h) + 1e-9


class TestDEta:
    def test_unit_density_is_l2(self, rng):
        f, g = _make_pair(rng=rng)
        assert l2.d_eta(constant_density(6), f, g) == pytest.approx(l2.d_l2(f, g), abs=1e-15)

    def test_zero_density(self, rng):
        f, g = _make_pair(rng=rng)
        assert l2.d_eta(constant_density(6, 0.0), f, g) == 0.0

    def test_indicator_is_restriction(self, rng):
        f, g = _make_pair(rng=rng)
        atoms = [0, 3, 4]
        fa, ga = l2.restrict(f, atoms), l2.restrict(g, atoms)
        assert l2.d_eta(indicator_density(6, atoms), f, g) == pytest.approx(l2.d_l2(fa, ga), abs=1e-15)

    def test_complement_identity(self, rng):
        f, g = _make_pair(rng=rng)
        eta = make_density(rng.uniform(0.0, 1.0, 6))
        total = l2.d_eta(eta, f, g) ** 2 + l2.d_eta(eta.complement(), f, g) ** 2
        assert total == pytest.approx(l2.d_l2(f, g) ** 2, abs=1e-12)

    def test_length_mismatch(self, rng):
        f, g = _make_pair(rng=rng)
        with pytest.raises(SpaceMismatch):
            l2.d_eta(constant_density(5), f, g)


# ---------------------------------------------------------------------------
# Geodesics
# ---------------------------------------------------------------------------

class TestGeodesic:
    def test_constant_endpoints_have_unit_alpha(self, rng):
        s = Sphere(2)
        space = _make_mixed_space()
        sigma = l2.geodesic(l2.constant_function(space, s, NORTH), l2.constant_function(space, s, EAST))
        assert np.allclose(sigma.alpha, 1.0)

    def test_single_atom_alpha(self):
        space = uniform_interval(2)
        s = Sphere(2)
        f = l2.make_function(space, s, [NORTH, NORTH])
        g = l2.make_function(space, s, [EAST, NORTH])
        sigma = l2.geodesic(f, g)
        assert np.allclose(sigma.alpha, [math.sqrt(2), 0.0], atol=1e-12)
        assert sigma.normalization_defect() <= 1e-15

    def test_identical_endpoints(self, rng):
        f, _ = _make_pair(rng=rng)
        with pytest.raises(IdenticalEndpoints):
            l2.geodesic(f, f)

    def test_antipodal_atom(self):
        space = uniform_interval(2)
        s = Sphere(2)
        f = l2.make_function(space, s, [NORTH, EAST])
        g = l2.make_function(space, s, [-NORTH, WEST])
        with pytest.raises(NonUniqueGeodesic):
            l2.geodesic(f, g)

    def test_endpoints(self, rng):
        f, g = _make_pair(rng=rng)
        sigma = l2.geodesic(f, g)
        assert l2.eval_geodesic(sigma, 0.0) is f
        assert l2.eval_geodesic(sigma, 1.0) is g

    def test_constant_midpoint(self):
        s = Sphere(2)
        space = uniform_interval(3)
        sigma = l2.geodesic(l2.constant_function(space, s, EAST), l2.constant_function(space, s, WEST))
        mid = l2.eval_geodesic(sigma, 0.5)
        expected = s.geodesic_point(EAST, WEST, 0.5)
        assert np.allclose(mid.points, expected)

    def test_out_of_range(self, rng):
        sigma = l2.geodesic(*_make_pair(rng=rng))
        with pytest.raises(OutOfRange):
            l2.eval_geodesic(sigma, 1.5)

    @pytest.mark.parametrize("manifold", [Sphere(2), Hyperbolic(2), Euclidean(3)])
    def test_speed_law(self, manifold, rng):
        sigma = l2.geodesic(*_make_pair(_make_mixed_space(), manifold, rng))
        gap = l2.d_l2(l2.eval_geodesic(sigma, 0.25), l2.eval_geodesic(sigma, 0.75))
        assert gap == pytest.approx(0.5 * sigma.length, abs=1e-8)
        assert sigma.normalization_defect() <= 1e-10

    def test_reversed(self, rng):
        sigma = l2.geodesic(*_make_pair(rng=rng))
        back = sigma.reversed()
        assert back.f is sigma.g and back.g is sigma.f
        assert back.length == sigma.length


# ---------------------------------------------------------------------------
# Angles
# ---------------------------------------------------------------------------

class TestAngles:
    def test_same_geodesic(self, rng):
        f, g = _make_pair(rng=rng)
        sigma = l2.geodesic(f, g)
        estimate = l2.alexandrov_angle_numeric(f, sigma, sigma)
        assert all(row.comparison_angle == pytest.approx(0.0, abs=1e-6) for row in estimate.trace)
        assert l2.alexandrov_angle_analytic(sigma, sigma) == pytest.approx(0.0, abs=1e-7)

    def test_reversal_on_euclidean(self, rng):
        e = Euclidean(2)
        space = uniform_interval(4)
        f, g = _make_pair(space, e, rng)
        s1 = l2.geodesic(f, g)
        s2 = l2.geodesic(f, l2.L2Function(space, e, 2.0 * f.points - g.points))
        estimate = l2.alexandrov_angle_numeric(f, s1, s2)
        assert all(row.comparison_angle == pytest.approx(math.pi, abs=1e-6) for row in estimate.trace)

    def test_disjoint_supports(self):
        s = Sphere(2)
        space = uniform_interval(2)
        f = l2.make_function(space, s, [NORTH, NORTH])
        s1 = l2.geodesic(f, l2.make_function(space, s, [EAST, NORTH]))
        s2 = l2.geodesic(f, l2.make_function(space, s, [NORTH, WEST]))
        assert l2.alexandrov_angle_analytic(s1, s2) == pytest.approx(math.pi / 2)
        estimate = l2.alexandrov_angle_numeric(f, s1, s2)
        assert estimate.angle == pytest.approx(math.pi / 2, abs=1e-9)

    def test_equal_per_atom_angles(self):
        s = Sphere(2)
        space = uniform_interval(3)
        f = l2.constant_function(space, s, NORTH)
        s1 = l2.geodesic(f, l2.constant_function(space, s, EAST))
        s2 = l2.geodesic(f, l2.constant_function(space, s, WEST))
        assert l2.alexandrov_angle_analytic(s1, s2) == pytest.approx(math.pi / 2)

    @pytest.mark.parametrize("manifold", [Sphere(2), Hyperbolic(2)])
    def test_numeric_converges_to_analytic(self, manifold, rng):
        space = uniform_interval(4)
        for _ in range(5):
            f = l2.random_function(space, manifold, rng)
            s1 = l2.geodesic(f, l2.random_function(space, manifold, rng))
            s2 = l2.geodesic(f, l2.random_function(space, manifold, rng))
            estimate = l2.alexandrov_angle_numeric(f, s1, s2)
            analytic = l2.alexandrov_angle_analytic(s1, s2)
            assert estimate.angle == pytest.approx(analytic, abs=1e-3)
            diffs = estimate.diffs
            assert diffs[-1] < diffs[0]

    def test_mismatched_basepoint(self, rng):
        f, g = _make_pair(rng=rng)
        h, k = _make_pair(rng=rng)
        with pytest.raises(MismatchedBasepoint):
            l2.alexandrov_angle_numeric(f, l2.geodesic(f, g), l2.geodesic(h, k))

    def test_bad_scales(self, rng):
        f, g = _make_pair(rng=rng)
        sigma = l2.geodesic(f, g)
        with pytest.raises(OutOfRange):
            l2.alexandrov_angle_numeric(f, sigma, sigma, [0.1, 0.2])
        with pytest.raises(OutOfRange):
            l2.alexandrov_angle_numeric(f, sigma, sigma, [])

    def test_product_cosine_terms_sum_to_cosine(self, rng):
        m = power(Sphere(2), 2)
        space = uniform_interval(3)
        f = l2.random_function(space, m, rng)
        s1 = l2.geodesic(f, l2.random_function(space, m, rng))
        s2 = l2.geodesic(f, l2.random_function(space, m, rng))
        terms = l2.angle_cosine_terms(s1, s2)
        assert len(terms) == 2
        assert math.fsum(terms) == pytest.approx(math.cos(l2.alexandrov_angle_analytic(s1, s2)), abs=1e-12)

    def test_cosine_terms_need_product(self, rng):
        f, g = _make_pair(rng=rng)
        sigma = l2.geodesic(f, g)
        with pytest.raises(NotAProduct):
            l2.angle_cosine_terms(sigma, sigma)

    def test_trace_csv(self, rng, tmp_path):
        f, g = _make_pair(rng=rng)
        h = l2.random_function(f.space, f.manifold, rng)
        s1, s2 = l2.geodesic(f, g), l2.geodesic(f, h)
        estimate = l2.alexandrov_angle_numeric(f, s1, s2)
        path = tmp_path / "trace.csv"
        l2.write_angle_trace_csv(path, estimate, l2.alexandrov_angle_analytic(s1, s2))
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["scale", "comparison_angle", "analytic_angle", "diff"]
        assert len(rows) == 1 + len(l2.DEFAULT_SCALES)
        assert rows[1][3] == ""


# ---------------------------------------------------------------------------
# Simple functions and splittings
# ---------------------------------------------------------------------------

class TestSimpleEmbed:
    def test_trivial_partition_is_constant(self):
        s = Sphere(2)
        f = l2.simple_embed(uniform_interval(4), s, trivial_partition(4), [EAST])
        assert np.allclose(f.points, EAST)

    def test_two_halves(self, rng):
        s = Sphere(2)
        p, q = s.random_point(rng), s.random_point(rng)
        part = make_partition(4, [[0, 1], [2, 3]])
        space = uniform_interval(4)
        fx = l2.simple_embed(space, s, part, [p, p])
        fy = l2.simple_embed(space, s, part, [q, p])
        assert l2.d_l2(fx, fy) == pytest.approx(float(s.dist(p, q)) / math.sqrt(2), abs=1e-12)
        assert l2.d_l2(fx, fx) == 0.0

    def test_arity(self):
        with pytest.raises(ArityMismatch):
            l2.simple_embed(uniform_interval(4), Sphere(2), trivial_partition(4), [EAST, WEST])

    def test_partition_size(self):
        with pytest.raises(SpaceMismatch):
            l2.simple_embed(uniform_interval(4), Sphere(2), trivial_partition(3), [EAST])


class TestRestrictSplit:
    def test_round_trip(self, rng):
        space = _make_mixed_space()
        f, _ = _make_pair(space, rng=rng)
        on_a, on_rest = l2.restrict_split(f, [1, 4])
        back = l2.glue_split(space, [1, 4], on_a, on_rest)
        assert np.array_equal(back.points, f.points)

    def test_constant_pieces(self, rng):
        s = Sphere(2)
        space = _make_mixed_space()
        x, y = s.random_point(rng), s.random_point(rng)
        fa, _ = l2.restrict_split(l2.constant_function(space, s, x), [0, 2])
        ga, _ = l2.restrict_split(l2.constant_function(space, s, y), [0, 2])
        assert l2.d_l2(fa, ga) ** 2 == pytest.approx(0.375 * float(s.dist2(x, y)), abs=1e-12)

    def test_pythagorean_identity(self, rng):
        space = uniform_interval(6)
        f, g = _make_pair(space, rng=rng)
        fa, fr = l2.restrict_split(f, [0, 2, 5])
        ga, gr = l2.restrict_split(g, [0, 2, 5])
        assert l2.d_l2(f, g) ** 2 == pytest.approx(l2.d_l2(fa, ga) ** 2 + l2.d_l2(fr, gr) ** 2, abs=1e-12)

    def test_proper_subset_required(self, rng):
        f, _ = _make_pair(rng=rng)
        with pytest.raises(EmptyOrFullSubset):
            l2.restrict_split(f, [])
        with pytest.raises(EmptyOrFullSubset):
            l2.restrict_split(f, range(6))

    def test_normalized_restriction(self, rng):
        space = _make_mixed_space()
        f, g = _make_pair(space, rng=rng)
        atoms = [2, 3]
        plain = l2.d_l2(l2.restrict(f, atoms), l2.restrict(g, atoms))
        assert l2.normalized_restriction_distance(f, g, atoms) == pytest.approx(
            plain / math.sqrt(space.mass(atoms)), abs=1e-12
        )


class TestProductSplit:
    def test_constant(self, rng):
        m = Product((Sphere(2), Hyperbolic(2)))
        x = m.random_point(rng)
        first, second = l2.product_split(l2.constant_function(uniform_interval(3), m, x))
        assert np.allclose(first.points, x[:3])
        assert np.allclose(second.points, x[3:])

    def test_distance_identity(self, rng):
        m = power(Sphere(2), 2)
        f, g = _make_pair(uniform_interval(6), m, rng)
        f1, f2 = l2.product_split(f)
        g1, g2 = l2.product_split(g)
        assert l2.d_l2(f, g) ** 2 == pytest.approx(l2.d_l2(f1, g1) ** 2 + l2.d_l2(f2, g2) ** 2, abs=1e-12)

    def test_equal_second_factor(self, rng):
        m = power(Sphere(2), 2)
        f, g = _make_pair(uniform_interval(4), m, rng)
        g = l2.L2Function(g.space, m, np.concatenate([g.points[:, :3], f.points[:, 3:]], axis=1))
        _, f2 = l2.product_split(f)
        _, g2 = l2.product_split(g)
        assert l2.d_l2(f2, g2) == 0.0

    def test_glue_round_trip(self, rng):
        m = Product((Sphere(2), Euclidean(2), Hyperbolic(2)))
        f, _ = _make_pair(uniform_interval(3), m, rng)
        parts = l2.product_split(f)
        assert len(parts) == 3
        assert np.array_equal(l2.product_glue(parts).points, f.points)

    def test_not_a_product(self, rng):
        f, _ = _make_pair(rng=rng)
        with pytest.raises(NotAProduct):
            l2.product_split(f)

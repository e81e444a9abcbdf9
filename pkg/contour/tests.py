import math

import numpy as np
from django.test import SimpleTestCase
from numpy.polynomial import polynomial as P
from numpy.testing import assert_allclose

from cornersgd.exceptions import ContourError, NumericalError

from .models import CornerSpec, MemoryAlgorithm, RationalMap
from .serializers import AlgorithmSerializer, RationalMapSerializer
from .utils import (
    algorithm_from_corner,
    contour_points,
    corner_map_eval,
    corner_map_values,
    corner_scale,
    discretize_corner,
    effective_learning_rate,
    external_angle,
    heavy_ball_algorithm,
    heavy_ball_map,
    heavy_ball_residual,
    memory1_injectivity,
    memory1_map,
    memory1_quartic_residual,
    memory1_stability,
    memory1_zhukovsky,
    plain_gd_map,
    rational_from_algorithm,
    stability_check,
)


def assert_same_polynomial(actual, expected, rtol=1e-9):
    scale = np.abs(expected).max()
    assert_allclose(actual, expected, rtol=rtol, atol=rtol * scale)


class RationalMapTests(SimpleTestCase):
    def test_rejects_non_monic_p(self):
        with self.assertRaises(ContourError):
            RationalMap([-2.0, 2.0], [-1.0])

    def test_rejects_p_without_root_at_one(self):
        with self.assertRaises(ContourError):
            RationalMap([-0.5, 1.0], [-1.0])

    def test_rejects_zero_q(self):
        with self.assertRaises(ContourError):
            RationalMap([-1.0, 1.0], [0.0, 0.0])

    def test_conjugation_symmetry(self):
        rational_map = discretize_corner(CornerSpec(theta=1.5, m=4))
        rng = np.random.default_rng(7)
        mus = 3.0 * (rng.standard_normal(100) + 1j * rng.standard_normal(100))
        assert_allclose(rational_map(np.conj(mus)), np.conj(rational_map(mus)), rtol=1e-12)


class CornerMapTests(SimpleTestCase):
    def test_large_mu(self):
        value = corner_map_eval(1.5, 1.0, 1e6)
        self.assertLess(abs(value / -1e6 - 1.0), 1e-5)

    def test_near_one_leading_order(self):
        eps = 1e-4
        value = corner_map_eval(1.5, 1.0, 1.0 + eps)
        leading = -corner_scale(1.5) * eps ** 1.5
        self.assertLess(abs(value / leading - 1.0), 1e-2)

    def test_near_one_with_first_correction(self):
        theta, eps = 1.5, 1e-4
        k = 1.0 / corner_scale(theta)
        correction = 1.0 - (2.0 - theta) * eps ** (theta - 1.0) / ((theta - 1.0) * k)
        refined = -eps ** theta / (k * (1.0 + eps) * correction)
        value = corner_map_eval(theta, 1.0, 1.0 + eps)
        self.assertLess(abs(value / refined - 1.0), 1e-4)

    def test_value_at_minus_one(self):
        value = corner_map_eval(1.5, 1.0, -1.0)
        self.assertAlmostEqual(value.imag, 0.0, delta=1e-12)
        self.assertGreater(value.real, 2.0)

    def test_rejects_cut(self):
        for mu in (0.0, 0.5, 1.0):
            with self.assertRaises(ContourError):
                corner_map_eval(1.5, 1.0, mu)

    def test_rejects_theta_range(self):
        with self.assertRaises(ContourError):
            corner_map_eval(2.0, 1.0, 2.0)

    def test_theta_exponent(self):
        eps = np.geomspace(1e-6, 1e-3, 16)
        values = np.array([abs(corner_map_eval(1.8, 1.0, 1.0 + e)) for e in eps])
        slope = np.polyfit(np.log(eps), np.log(values), 1)[0]
        self.assertAlmostEqual(slope, 1.8, delta=1e-3)

    def test_vectorized_values_match_adaptive(self):
        rng = np.random.default_rng(3)
        phi = rng.uniform(0.01, 2 * math.pi - 0.01, 20)
        mus = np.concatenate([np.exp(1j * phi), 1.5 * np.exp(1j * phi), [-1.0, 4.0]])
        expected = np.array([corner_map_eval(1.3, 2.0, mu) for mu in mus])
        assert_allclose(corner_map_values(1.3, 2.0, mus), expected, rtol=1e-8)

    def test_vectorized_value_at_one(self):
        self.assertEqual(corner_map_values(1.5, 1.0, [1.0])[0], 0.0)


class DiscretizeCornerTests(SimpleTestCase):
    def test_single_node_product(self):
        rational_map = discretize_corner(CornerSpec(theta=1.5, a=1.0, m=1, l=5.0))
        expected = P.polymul([-1.0, 1.0], [-1.0 + math.exp(-2.5), 1.0])
        assert_allclose(rational_map.p, expected, rtol=1e-14)

    def test_root_at_one_and_monic(self):
        for theta in (1.3, 1.5, 1.8):
            for m in range(1, 9):
                rational_map = discretize_corner(CornerSpec(theta=theta, m=m))
                self.assertEqual(rational_map.p[-1], 1.0)
                self.assertLess(abs(rational_map.p_at(1.0)), 1e-12)

    def test_converges_to_ideal_map(self):
        mus = 2.0 * np.exp(2j * math.pi * np.arange(100) / 100)
        ideal = corner_map_values(1.8, 1.0, mus)

        def error(m):
            rational_map = discretize_corner(CornerSpec(theta=1.8, a=1.0, m=m, l=5.0))
            return np.max(np.abs(rational_map(mus) - ideal) / np.abs(ideal))

        self.assertLess(error(5), error(3))


class AlgorithmFromCornerTests(SimpleTestCase):
    def test_single_node_coefficients(self):
        alg = algorithm_from_corner(CornerSpec(theta=1.5, a=1.0, m=1, l=1.0))
        assert_allclose(alg.d, [[1.0 - math.exp(-0.5)]])
        self.assertAlmostEqual(alg.alpha, 0.5 * math.exp(-0.25), delta=1e-15)

    def test_signs(self):
        for theta in (1.3, 1.5, 1.8):
            alg = algorithm_from_corner(CornerSpec(theta=theta, m=6))
            diagonal = np.diagonal(alg.d)
            self.assertTrue(np.all((diagonal > 0) & (diagonal < 1)))
            self.assertTrue(np.all(alg.c < 0))
            self.assertGreater(alg.alpha, 0)
            self.assertTrue(alg.is_d_stable())

    def test_characteristic_polynomial_identity(self):
        for theta in (1.3, 1.5, 1.8):
            for m in range(1, 9):
                spec = CornerSpec(theta=theta, a=1.0, m=m, l=5.0)
                expected = discretize_corner(spec)
                actual = rational_from_algorithm(algorithm_from_corner(spec))
                assert_same_polynomial(actual.p, expected.p)
                assert_same_polynomial(actual.q, expected.q)


class RationalFromAlgorithmTests(SimpleTestCase):
    def test_plain_gd(self):
        rational_map = plain_gd_map(0.7)
        assert_allclose(rational_map.p, [-1.0, 1.0])
        assert_allclose(rational_map.q, [-0.7])

    def test_heavy_ball(self):
        rational_map = rational_from_algorithm(heavy_ball_algorithm(0.8, 0.3))
        assert_allclose(rational_map.p, P.polyfromroots([1.0, 0.3]), atol=1e-15)
        assert_allclose(rational_map.q, [0.0, -0.8], atol=1e-15)

    def test_dense_memory_matches_diagonalized(self):
        spec = CornerSpec(theta=1.5, m=3)
        alg = algorithm_from_corner(spec)
        rng = np.random.default_rng(11)
        basis = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        inverse = np.linalg.inv(basis)
        dense = MemoryAlgorithm(
            alpha=alg.alpha,
            b=alg.b @ inverse,
            c=basis @ alg.c,
            d=basis @ alg.d @ inverse,
        )
        expected = discretize_corner(spec)
        actual = rational_from_algorithm(dense)
        assert_same_polynomial(actual.p, expected.p, rtol=1e-8)
        assert_same_polynomial(actual.q, expected.q, rtol=1e-8)

    def test_rejects_inconsistent_shapes(self):
        with self.assertRaises(ContourError):
            MemoryAlgorithm(alpha=1.0, b=[1.0, 1.0], c=[1.0], d=[[0.5]])


class HeavyBallTests(SimpleTestCase):
    def test_circle_for_zero_momentum(self):
        points = contour_points(heavy_ball_map(1.0, 0.0), 64).points
        assert_allclose(np.abs(points - 1.0), 1.0, rtol=1e-12)

    def test_ellipse(self):
        for alpha, major, minor in ((1.0, 1.5, 0.5), (2.0, 0.75, 0.25)):
            points = contour_points(heavy_ball_map(alpha, 0.5), 128).points
            normalized = ((points.real - major) / major) ** 2 + (points.imag / minor) ** 2
            assert_allclose(normalized, 1.0, rtol=1e-10)
            assert_allclose(heavy_ball_residual(alpha, 0.5, points), 0.0, atol=1e-10)

    def test_effective_learning_rate(self):
        self.assertAlmostEqual(effective_learning_rate(heavy_ball_map(0.6, 0.5)), 1.2, delta=1e-12)
        self.assertAlmostEqual(effective_learning_rate(plain_gd_map(0.6)), 0.6, delta=1e-12)

    def test_rejects_beta_range(self):
        with self.assertRaises(ContourError):
            heavy_ball_map(1.0, 1.0)


class MemoryOneTests(SimpleTestCase):
    def test_injectivity(self):
        self.assertTrue(memory1_injectivity(0.5, 0.0, -1.0))
        self.assertFalse(memory1_injectivity(0.0, -0.5, -1.0))
        self.assertTrue(memory1_injectivity(0.0, 0.3, -1.0))
        with self.assertRaises(ContourError):
            memory1_injectivity(0.0, 0.3, 0.0)

    def test_quartic_holds_on_contour(self):
        beta, q0, q1 = 0.65, 0.125, -1.0
        points = contour_points(memory1_map(beta, q0, q1), 64).points
        self.assertLess(memory1_quartic_residual(beta, q0, q1, points).max(), 1e-8)
        self.assertGreater(memory1_quartic_residual(beta, q0, q1, 100 + 100j), 1.0)

    def test_quartic_reduces_to_ellipse(self):
        points = contour_points(heavy_ball_map(1.0, 0.5), 64).points
        self.assertLess(memory1_quartic_residual(0.5, 0.0, -1.0, points).max(), 1e-10)

    def test_zhukovsky_form(self):
        beta, q0, q1 = 0.65, 0.125, -1.0
        mus = 1.3 * np.exp(1j * np.linspace(0.1, 6.0, 25))
        assert_allclose(memory1_zhukovsky(beta, q0, q1, mus), memory1_map(beta, q0, q1)(mus), rtol=1e-12)

    def test_stability_conditions_match_root_scan(self):
        lambdas = np.linspace(0.01, 2.9, 200)
        self.assertTrue(memory1_stability(0.5, 0.0, -1.0, 2.9))
        self.assertTrue(stability_check(memory1_map(0.5, 0.0, -1.0), lambdas).stable)
        self.assertFalse(memory1_stability(0.5, 0.0, -1.0, 3.1))
        self.assertFalse(stability_check(memory1_map(0.5, 0.0, -1.0), [3.1]).stable)

        self.assertTrue(memory1_stability(0.65, 0.125, -1.0, 1.0))
        self.assertTrue(stability_check(memory1_map(0.65, 0.125, -1.0), np.linspace(0.01, 1.0, 200)).stable)


class StabilityTests(SimpleTestCase):
    def test_plain_gd_roots(self):
        report = stability_check(plain_gd_map(1.0), [1.5])
        self.assertTrue(report.stable)
        self.assertAlmostEqual(report.worst_modulus, 0.5, delta=1e-12)
        report = stability_check(plain_gd_map(1.0), [0.5, 2.5])
        self.assertFalse(report.stable)
        self.assertAlmostEqual(report.worst_modulus, 1.5, delta=1e-12)
        self.assertEqual(report.worst_lambda, 2.5)

    def test_discretized_corner_is_stable(self):
        rational_map = discretize_corner(CornerSpec(theta=1.8, a=1.0, m=5, l=5.0))
        lambdas = np.geomspace(1e-4, 2.0, 200)
        report = stability_check(rational_map, lambdas)
        self.assertTrue(report.stable)
        self.assertLess(report.worst_modulus, 1.0)

    def test_margin_shrinks_toward_zero(self):
        rational_map = discretize_corner(CornerSpec(theta=1.8, a=1.0, m=5, l=5.0))
        small = stability_check(rational_map, [1e-8]).worst_modulus
        large = stability_check(rational_map, [1.0]).worst_modulus
        self.assertGreater(small, large)
        self.assertLess(small, 1.0)

    def test_effective_learning_rate_matches_derivative(self):
        rational_map = discretize_corner(CornerSpec(theta=1.8, a=1.0, m=5, l=5.0))
        step = 2.0 ** -30
        derivative = (rational_map(1.0 + step) - rational_map(1.0 - step)) / (2 * step)
        alpha_eff = effective_learning_rate(rational_map)
        self.assertGreater(alpha_eff, 0)
        self.assertAlmostEqual(alpha_eff, -1.0 / derivative, delta=1e-6 * alpha_eff)


class ContourPointsTests(SimpleTestCase):
    def test_plain_gd_closed_form(self):
        polyline = contour_points(plain_gd_map(2.0), 8)
        expected = -(np.exp(1j * polyline.phi) - 1.0) / 2.0
        assert_allclose(polyline.points, expected, atol=1e-15)

    def test_conjugate_symmetry(self):
        points = contour_points(discretize_corner(CornerSpec(theta=1.5, m=5)), 64).points
        assert_allclose(points[1:], np.conj(points[1:][::-1]), atol=1e-12)

    def test_corner_angle(self):
        polyline = contour_points(CornerSpec(theta=1.8), 1024)
        self.assertEqual(polyline.points[0], 0.0)
        self.assertAlmostEqual(external_angle(polyline), 1.8 * math.pi, delta=0.02 * 1.8 * math.pi)

    def test_plain_gd_angle_is_straight(self):
        polyline = contour_points(plain_gd_map(1.0), 1024)
        self.assertAlmostEqual(external_angle(polyline), math.pi, delta=0.01)

    def test_pole_on_circle_reported(self):
        with self.assertRaises(NumericalError):
            contour_points(memory1_map(0.5, -1.0, 1.0), 8)

    def test_too_few_points(self):
        with self.assertRaises(ContourError):
            contour_points(plain_gd_map(1.0), 4)


class SerializerTests(SimpleTestCase):
    def test_rational_map_round_trip(self):
        rational_map = heavy_ball_map(1.0, 0.5)
        serializer = RationalMapSerializer(data=RationalMapSerializer(rational_map).data)
        self.assertTrue(serializer.is_valid(), serializer.errors)
        assert_allclose(serializer.save().p, rational_map.p)

    def test_rational_map_invariants_enforced(self):
        self.assertFalse(RationalMapSerializer(data={"p": [1.0, 1.0], "q": [-1.0]}).is_valid())

    def test_algorithm_names(self):
        serializer = AlgorithmSerializer(data={"name": "corner", "theta": 1.8, "memory": 5})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        source, algorithm = serializer.save()
        self.assertEqual(source.memory, 5)
        self.assertEqual(algorithm.m, 5)

        serializer = AlgorithmSerializer(data={"name": "ideal-corner", "theta": 1.5})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        source, algorithm = serializer.save()
        self.assertIsInstance(source, CornerSpec)
        self.assertIsNone(algorithm)

    def test_algorithm_rejects_bad_theta(self):
        self.assertFalse(AlgorithmSerializer(data={"name": "corner", "theta": 2.5}).is_valid())

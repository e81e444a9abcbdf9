import math
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from cornersgd.exceptions import SpectrumError

from .models import PowerLawMeta, SpectralProblem
from .serializers import SpectralProblemSerializer, dump_problem, load_problem
from .utils import (
    bin_eigenvalues,
    cumulative_source,
    fit_exponents,
    indicator_problem,
    indicator_roots,
    power_law_problem,
)


class PowerLawProblemTests(SimpleTestCase):
    def test_two_mode_problem(self):
        problem = power_law_problem(nu=1, zeta=1, Lambda=1, Qsrc=1, K=2)
        assert_allclose(problem.eigenvalues, [1.0, 0.5])
        assert_allclose(problem.coeffs, [0.5, 1.0])

    def test_cumulative_source_law_is_exact(self):
        problem = power_law_problem(nu=4, zeta=0.25, K=10_000)
        assert_allclose(cumulative_source(problem), problem.eigenvalues ** 0.25, rtol=1e-12)

    def test_capacity_fit_is_exact(self):
        problem = power_law_problem(nu=4, zeta=0.25, K=10_000)
        fit = fit_exponents(problem)
        self.assertAlmostEqual(fit.nu_fit, 4.0, delta=1e-6)
        self.assertAlmostEqual(fit.zeta_fit, 0.25, delta=1e-6)
        self.assertTrue(fit.power_law)

    def test_exact_fit_for_nu_two(self):
        fit = fit_exponents(power_law_problem(nu=2, zeta=0.5, K=500))
        self.assertAlmostEqual(fit.nu_fit, 2.0, delta=1e-9)

    def test_rejects_non_positive_parameters(self):
        for kwargs in ({"nu": 0, "zeta": 1}, {"nu": 1, "zeta": -1}, {"nu": 1, "zeta": 1, "Lambda": 0}):
            with self.assertRaises(SpectrumError):
                power_law_problem(**kwargs)
        with self.assertRaises(SpectrumError):
            power_law_problem(nu=1, zeta=1, K=1)

    def test_truncation_keeps_cumulative_mass(self):
        problem = power_law_problem(nu=2, zeta=0.5, K=100)
        head = problem.truncated(50)
        self.assertEqual(head.size, 50)
        assert_allclose(cumulative_source(head), cumulative_source(problem)[:50], rtol=1e-12)


class SpectralProblemTests(SimpleTestCase):
    def test_rejects_unsorted_eigenvalues(self):
        with self.assertRaises(SpectrumError):
            SpectralProblem([0.5, 1.0], [1.0, 1.0])

    def test_rejects_repeated_eigenvalues(self):
        with self.assertRaises(SpectrumError):
            SpectralProblem([1.0, 1.0], [1.0, 1.0])

    def test_rejects_negative_coefficients(self):
        with self.assertRaises(SpectrumError):
            SpectralProblem([1.0, 0.5], [1.0, -1.0])

    def test_rejects_length_mismatch(self):
        with self.assertRaises(SpectrumError):
            SpectralProblem([1.0, 0.5], [1.0])

    def test_arrays_are_read_only(self):
        problem = power_law_problem(nu=1, zeta=1, K=4)
        with self.assertRaises(ValueError):
            problem.eigenvalues[0] = 2.0


class IndicatorProblemTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.problem = indicator_problem(64)

    def test_leading_eigenvalue(self):
        self.assertAlmostEqual(indicator_problem(1).eigenvalues[0], 0.0809, delta=5e-4)

    def test_closed_form_roots(self):
        xi = indicator_roots(4, refine_roots=False)
        assert_allclose(xi, [1.8751, 1.5 * math.pi, 2.5 * math.pi, 3.5 * math.pi])

    def test_refined_roots_solve_frequency_equation(self):
        xi = indicator_roots(8)
        assert_allclose(np.cos(xi) + 1.0 / np.cosh(xi), 0.0, atol=1e-12)
        assert_allclose(xi[:4], [1.875104, 4.694091, 7.854757, 10.995541], atol=1e-5)
        # Roots approach (2k - 1) pi / 2 at the rate 2 exp(-xi).
        assert_allclose(xi[2:], math.pi / 2 + math.pi * np.arange(2, 8), atol=1e-3)

    def test_exponents(self):
        fit = fit_exponents(self.problem)
        self.assertAlmostEqual(fit.nu_fit, 4.0, delta=0.04)
        self.assertAlmostEqual(fit.zeta_fit, 0.25, delta=0.0125)

    def test_meta_records_nominal_exponents(self):
        self.assertEqual(self.problem.meta.nu, 4.0)
        self.assertEqual(self.problem.meta.zeta, 0.25)

    def test_coefficients_positive(self):
        self.assertTrue(np.all(self.problem.coeffs > 0))
        self.assertGreaterEqual(self.problem.tail_mass, 0.0)

    def test_source_mass_decreases(self):
        # lambda_k s_k oscillates with period 8 in k; its block sums decay.
        blocks = self.problem.source.reshape(8, 8).sum(axis=1)
        self.assertTrue(np.all(np.diff(blocks) < 0))

    def test_source_mass_bounded_by_target(self):
        self.assertLessEqual(float(np.sum(self.problem.source)), 0.5 + 1e-9)

    def test_coarse_quadrature_rejected(self):
        with self.assertRaises(SpectrumError):
            indicator_problem(64, quad_nodes=50)


class FitExponentsTests(SimpleTestCase):
    def test_exponential_spectrum_flagged(self):
        k = np.arange(1, 65)
        fit = fit_exponents(SpectralProblem(np.exp(-k), np.ones(64)))
        self.assertFalse(fit.power_law)

    def test_scale_equivariance(self):
        problem = power_law_problem(nu=2, zeta=0.5, K=200)
        scaled = SpectralProblem(7.3 * problem.eigenvalues, problem.coeffs)
        base, moved = fit_exponents(problem), fit_exponents(scaled)
        self.assertAlmostEqual(base.nu_fit, moved.nu_fit, delta=1e-9)
        self.assertAlmostEqual(base.zeta_fit, moved.zeta_fit, delta=1e-9)

    def test_short_window_rejected(self):
        with self.assertRaises(SpectrumError):
            fit_exponents(power_law_problem(nu=2, zeta=0.5, K=20))

    def test_constant_source_rejected(self):
        problem = SpectralProblem(np.geomspace(1.0, 1e-3, 40), np.zeros(40), tail_mass=1.0)
        with self.assertRaises(SpectrumError):
            fit_exponents(problem)


class BinEigenvaluesTests(SimpleTestCase):
    def test_binning_preserves_weights(self):
        problem = power_law_problem(nu=1.5, zeta=0.5, K=2000)
        lambdas, u_weights, v_weights = bin_eigenvalues(problem, rel_width=0.05)
        self.assertLess(lambdas.size, problem.size)
        self.assertAlmostEqual(u_weights.sum(), np.sum(problem.eigenvalues ** 2), delta=1e-12)
        self.assertAlmostEqual(v_weights.sum(), problem.source.sum(), delta=1e-12)
        self.assertTrue(np.all(np.diff(lambdas) < 0))

    def test_no_binning_returns_problem_arrays(self):
        problem = power_law_problem(nu=2, zeta=0.5, K=10)
        lambdas, u_weights, v_weights = bin_eigenvalues(problem)
        assert_allclose(lambdas, problem.eigenvalues)
        assert_allclose(u_weights, problem.eigenvalues ** 2)
        assert_allclose(v_weights, problem.source)


class SpectralProblemSerializerTests(SimpleTestCase):
    def test_round_trip_through_file(self):
        problem = power_law_problem(nu=2, zeta=0.5, K=40)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "problem.json")
            dump_problem(problem, path)
            loaded = load_problem(path)
        assert_allclose(loaded.eigenvalues, problem.eigenvalues, rtol=0)
        assert_allclose(loaded.coeffs, problem.coeffs, rtol=0)
        self.assertEqual(loaded.meta, problem.meta)

    def test_rejects_increasing_eigenvalues(self):
        serializer = SpectralProblemSerializer(data={"eigenvalues": [0.1, 0.2], "coeffs": [1, 1]})
        self.assertFalse(serializer.is_valid())

    def test_rejects_mismatched_capacity(self):
        problem = power_law_problem(nu=4, zeta=0.25, K=64)
        document = SpectralProblemSerializer(problem).data
        document["meta"]["nu"] = 3.0
        serializer = SpectralProblemSerializer(data=document)
        self.assertFalse(serializer.is_valid())

    def test_meta_must_be_positive(self):
        document = {
            "eigenvalues": [1.0, 0.5],
            "coeffs": [1.0, 1.0],
            "meta": {"nu": 1.0, "zeta": 0.0, "Lambda": 1.0, "Qsrc": 1.0},
        }
        self.assertFalse(SpectralProblemSerializer(data=document).is_valid())

    def test_meta_builds_dataclass(self):
        problem = power_law_problem(nu=4, zeta=0.25, K=64)
        loaded = SpectralProblemSerializer(data=SpectralProblemSerializer(problem).data)
        self.assertTrue(loaded.is_valid(), loaded.errors)
        self.assertIsInstance(loaded.save().meta, PowerLawMeta)

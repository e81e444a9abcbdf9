import math
from unittest import mock

import numpy as np
from django.test import SimpleTestCase, tag
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import linregress

from contour.models import CornerSpec
from contour.utils import (
    algorithm_from_corner,
    discretize_corner,
    heavy_ball_algorithm,
    heavy_ball_map,
    plain_gd_algorithm,
    plain_gd_map,
)
from cornersgd.exceptions import NumericalError, PropagatorError
from spectrum.models import SpectralProblem
from spectrum.utils import power_law_problem

from .models import LossTrajectory, PropagatorSeries, Regime, RegimeReport
from .serializers import RegimeReportSerializer, series_columns
from .utils import (
    _warn_leakage,
    aggregate,
    brute_force_loss,
    classify_regime,
    finite_memory_asymptote,
    kernels_contour,
    kernels_matrix,
    kernels_tau2,
    logger,
    loss_from_propagators,
    total_noise,
    total_noise_parseval,
)


def log_slope(t, values, lo, hi):
    window = (t >= lo) & (t <= hi)
    return linregress(np.log(t[window]), np.log(values[window])).slope


class PropagatorSeriesTests(SimpleTestCase):
    def test_rejects_negative_entries(self):
        with self.assertRaises(PropagatorError):
            PropagatorSeries([0.1, -0.1], [1.0, 1.0])

    def test_rejects_shape_mismatch(self):
        with self.assertRaises(PropagatorError):
            PropagatorSeries([0.1, 0.1], [1.0])

    def test_rebatched_halves_noise(self):
        series = PropagatorSeries([0.3, 0.2, 0.1], [1.0, 0.5, 0.25], batch=3)
        doubled = series.rebatched(6)
        assert_array_equal(doubled.u, series.u / 2)
        assert_array_equal(doubled.v, series.v)
        self.assertEqual(doubled.batch, 6)

    def test_csv_columns(self):
        series = PropagatorSeries([0.3, 0.2], [1.0, 0.5])
        columns = series_columns(series)
        assert_array_equal(columns["t"], [1, 2])


class LossTrajectoryTests(SimpleTestCase):
    def test_default_steps_start_at_zero(self):
        trajectory = LossTrajectory([0.5, 0.25, 0.125])
        assert_array_equal(trajectory.steps, [0, 1, 2])

    def test_rejects_negative_loss(self):
        with self.assertRaises(PropagatorError):
            LossTrajectory([0.5, -0.1])

    def test_rejects_unknown_provenance(self):
        with self.assertRaises(PropagatorError):
            LossTrajectory([0.5], provenance="guess")


class KernelsMatrixTests(SimpleTestCase):
    def test_plain_gd_closed_form(self):
        pair = kernels_matrix(plain_gd_algorithm(0.5), 0.3, 20)
        t = np.arange(1, 21)
        assert_allclose(pair.u, -0.5 * 0.85 ** (t - 1), rtol=1e-12)
        assert_allclose(pair.v, 0.85 ** (t - 1), rtol=1e-12)

    def test_heavy_ball_matches_dense_products(self):
        alg = heavy_ball_algorithm(1.0, 0.5)
        pair = kernels_matrix(alg, 0.5, 6)
        s = alg.transition(0.5)
        for t in range(1, 7):
            power = np.linalg.matrix_power(s, t - 1)
            self.assertAlmostEqual(pair.u[t - 1], (power @ alg.noise_column())[0], delta=1e-14)
            self.assertAlmostEqual(pair.v[t - 1], (power @ alg.signal_column())[0], delta=1e-14)

    def test_heavy_ball_second_step(self):
        # S = [[1 - 0.5, 1], [-0.5 * 0.5, 0.5]] applied to (-1, -0.5)
        pair = kernels_matrix(heavy_ball_algorithm(1.0, 0.5), 0.5, 2)
        self.assertAlmostEqual(pair.u[1], 0.5 * -1.0 + 1.0 * -0.5, delta=1e-15)
        self.assertAlmostEqual(pair.v[1], 0.5, delta=1e-15)

    def test_first_step(self):
        spec = CornerSpec(theta=1.8, m=5)
        for alg in (plain_gd_algorithm(0.7), heavy_ball_algorithm(1.3, 0.2), algorithm_from_corner(spec)):
            pair = kernels_matrix(alg, [0.01, 0.5], 3)
            assert_allclose(pair.u[:, 0], -alg.alpha)
            assert_allclose(pair.v[:, 0], 1.0)

    def test_array_input_matches_scalar(self):
        alg = heavy_ball_algorithm(1.0, 0.5)
        batched = kernels_matrix(alg, [0.01, 0.1, 1.0], 10)
        self.assertEqual(batched.u.shape, (3, 10))
        assert_allclose(batched.u[1], kernels_matrix(alg, 0.1, 10).u, rtol=1e-15)

    def test_rejects_non_positive_lambda(self):
        with self.assertRaises(PropagatorError):
            kernels_matrix(plain_gd_algorithm(1.0), 0.0, 4)


class KernelsContourTests(SimpleTestCase):
    def test_plain_gd_matches_matrix(self):
        contour = kernels_contour(plain_gd_map(1.0), 0.5, 8, grid=1024)
        matrix = kernels_matrix(plain_gd_algorithm(1.0), 0.5, 8)
        assert_allclose(contour.u, matrix.u, rtol=0, atol=1e-10)
        assert_allclose(contour.v, matrix.v, rtol=0, atol=1e-10)

    def test_unit_circle_sampling(self):
        alg = heavy_ball_algorithm(1.0, 0.5)
        contour = kernels_contour(heavy_ball_map(1.0, 0.5), 0.5, 16, grid=1024, radius=1.0)
        matrix = kernels_matrix(alg, 0.5, 16)
        assert_allclose(contour.u, matrix.u, rtol=0, atol=1e-10)
        assert_allclose(contour.v, matrix.v, rtol=0, atol=1e-10)

    def test_radius_inside_unit_circle_rejected(self):
        with self.assertRaises(PropagatorError):
            kernels_contour(plain_gd_map(1.0), 0.5, 8, grid=64, radius=0.9)

    def test_discretized_corner_matches_matrix(self):
        spec = CornerSpec(theta=1.8, m=5)
        contour = kernels_contour(discretize_corner(spec), 0.1, 64, grid=65536)
        matrix = kernels_matrix(algorithm_from_corner(spec), 0.1, 64)
        assert_allclose(contour.u, matrix.u, rtol=1e-8, atol=1e-10 * np.abs(matrix.u).max())
        assert_allclose(contour.v, matrix.v, rtol=1e-8, atol=1e-10 * np.abs(matrix.v).max())

    def test_oracle_equivalence(self):
        lambdas = [0.01, 0.1, 1.0]
        pairs = [
            (plain_gd_map(1.0), plain_gd_algorithm(1.0)),
            (heavy_ball_map(1.0, 0.5), heavy_ball_algorithm(1.0, 0.5)),
        ]
        for m in (1, 3, 5):
            spec = CornerSpec(theta=1.8, m=m)
            pairs.append((discretize_corner(spec), algorithm_from_corner(spec)))
        for source, alg in pairs:
            contour = kernels_contour(source, lambdas, 200, grid=4096)
            matrix = kernels_matrix(alg, lambdas, 200)
            assert_allclose(contour.u, matrix.u, rtol=1e-6, atol=1e-10)
            assert_allclose(contour.v, matrix.v, rtol=1e-6, atol=1e-10)

    def test_non_positive_coefficients_vanish(self):
        pair = kernels_contour(heavy_ball_map(1.0, 0.5), [0.1, 1.0], 32, grid=1024)
        self.assertLess(pair.leakage, 1e-8)

    def test_leakage_warning_threshold(self):
        with mock.patch.object(logger, "warning") as warning:
            _warn_leakage(2e-8)
        warning.assert_not_called()
        with self.assertLogs("app", level="WARNING"):
            _warn_leakage(2e-6)

    def test_grid_must_cover_four_steps(self):
        with self.assertRaises(PropagatorError):
            kernels_contour(plain_gd_map(1.0), 0.5, 8, grid=16)

    def test_grid_must_be_power_of_two(self):
        with self.assertRaises(PropagatorError):
            kernels_contour(plain_gd_map(1.0), 0.5, 8, grid=1000)

    def test_near_singular_node(self):
        # Psi(-r) = 1 + r on the circle of radius r = 1 + 24 / 64
        with self.assertRaises(NumericalError):
            kernels_contour(plain_gd_map(1.0), 2.375, 8, grid=64)

    def test_ideal_corner_first_step(self):
        spec = CornerSpec(theta=1.5)
        pair = kernels_contour(spec, 0.5, 4, grid=4096)
        self.assertAlmostEqual(pair.v[0], 1.0, delta=1e-6)
        self.assertLess(pair.u[0], 0.0)


class AggregateTests(SimpleTestCase):
    def setUp(self):
        self.problem = SpectralProblem([1.0], [1.0])
        self.t = np.arange(1, 11)

    def test_single_eigenvalue_closed_form(self):
        series = aggregate(self.problem, plain_gd_algorithm(0.5), 10, tau1=1.0, batch=1)
        assert_allclose(series.u, 0.25 * 0.5 ** (2 * (self.t - 1)), rtol=1e-12)
        assert_allclose(series.v, 0.5 ** (2 * (self.t - 1)), rtol=1e-12)

    def test_contour_source_closed_form(self):
        series = aggregate(self.problem, plain_gd_map(0.5), 10)
        assert_allclose(series.u, 0.25 * 0.5 ** (2 * (self.t - 1)), rtol=0, atol=1e-12)
        assert_allclose(series.v, 0.5 ** (2 * (self.t - 1)), rtol=0, atol=1e-12)

    def test_batch_scaling_is_exact(self):
        problem = power_law_problem(nu=2, zeta=0.5, K=100)
        alg = heavy_ball_algorithm(1.0, 0.5)
        single = aggregate(problem, alg, 50, batch=1)
        double = aggregate(problem, alg, 50, batch=2)
        assert_array_equal(double.u, single.u / 2)
        assert_array_equal(double.v, single.v)
        assert_array_equal(single.rebatched(2).u, double.u)

    def test_loss_decreases_with_batch(self):
        problem = power_law_problem(nu=2, zeta=0.25, K=200)
        losses = [
            loss_from_propagators(aggregate(problem, plain_gd_algorithm(1.0), 100, batch=batch), 100).l
            for batch in (10, 20, 40)
        ]
        self.assertTrue(np.all(losses[0] >= losses[1]))
        self.assertTrue(np.all(losses[1] >= losses[2]))

    def test_binning_keeps_totals_close(self):
        problem = power_law_problem(nu=2, zeta=0.5, K=2000)
        exact = aggregate(problem, plain_gd_map(1.0), 50)
        binned = aggregate(problem, plain_gd_map(1.0), 50, rel_width=1e-2)
        assert_allclose(binned.v, exact.v, rtol=1e-3)
        assert_allclose(binned.u, exact.u, rtol=1e-3)

    @tag("slow")
    def test_plain_gd_power_law_rates(self):
        problem = power_law_problem(nu=4, zeta=0.25, K=10_000)
        series = aggregate(problem, plain_gd_map(1.0), 10_000)
        t = series.steps
        self.assertAlmostEqual(-log_slope(t, series.v, 100, 10_000), 0.25, delta=0.02)
        self.assertAlmostEqual(-log_slope(t, series.u, 100, 10_000), 1.75, delta=0.05)
        prefactor = math.gamma(1.25) * 2.0 ** -0.25
        plateau = series.v[999] * 1000 ** 0.25
        self.assertAlmostEqual(plateau / prefactor, 1.0, delta=0.1)


class TotalNoiseTests(SimpleTestCase):
    def test_geometric_series(self):
        t = np.arange(1, 201)
        series = PropagatorSeries(0.5 * 0.5 ** (t - 1) * 2.0, np.zeros(200))
        total = total_noise(series)
        self.assertAlmostEqual(total.u_sigma, 2.0, delta=1e-9)
        self.assertFalse(total.divergent)

    def test_power_law_tail(self):
        t = np.arange(1, 1001, dtype=float)
        total = total_noise(PropagatorSeries(t ** -2.0, np.zeros(1000)))
        self.assertAlmostEqual(total.u_sigma, math.pi ** 2 / 6, delta=1e-6)
        self.assertAlmostEqual(total.tail_exponent, 2.0, delta=1e-9)

    def test_non_integrable_tail(self):
        t = np.arange(1, 1001, dtype=float)
        total = total_noise(PropagatorSeries(0.01 * t ** -0.9, np.zeros(1000)))
        self.assertTrue(total.divergent)
        self.assertEqual(total.u_sigma, math.inf)

    def test_zero_noise(self):
        total = total_noise(PropagatorSeries(np.zeros(50), np.ones(50)))
        self.assertEqual(total.u_sigma, 0.0)

    def test_parseval_matches_time_sum(self):
        problem = power_law_problem(nu=1, zeta=0.5, K=16)
        series = aggregate(problem, heavy_ball_algorithm(1.0, 0.5), 1000, tau1=0.7, batch=3)
        frequency = total_noise_parseval(problem, heavy_ball_map(1.0, 0.5), tau1=0.7, batch=3)
        self.assertAlmostEqual(total_noise(series).u_sigma / frequency, 1.0, delta=1e-4)


class LossFromPropagatorsTests(SimpleTestCase):
    def test_matches_chain_enumeration(self):
        rng = np.random.default_rng(7)
        series = PropagatorSeries(rng.uniform(0.0, 0.3, 12), rng.uniform(0.0, 1.0, 12))
        for T in range(1, 13):
            assert_allclose(loss_from_propagators(series, T).l, brute_force_loss(series, T), rtol=0, atol=1e-12)

    def test_first_two_steps(self):
        series = PropagatorSeries([0.2, 0.1, 0.05], [1.0, 0.6, 0.3])
        loss = loss_from_propagators(series, 2).l
        self.assertAlmostEqual(loss[0], 0.5, delta=1e-15)
        self.assertAlmostEqual(loss[1], (0.6 + 0.2 * 1.0) / 2, delta=1e-15)

    def test_zero_noise_is_half_signal(self):
        v = 0.9 ** np.arange(20)
        trajectory = loss_from_propagators(PropagatorSeries(np.zeros(20), v), 20)
        assert_allclose(trajectory.l, v / 2, rtol=1e-15)
        self.assertEqual(trajectory.provenance, "theory")

    def test_series_too_short(self):
        with self.assertRaises(PropagatorError):
            loss_from_propagators(PropagatorSeries([0.1], [1.0]), 2)


class ClassifyRegimeTests(SimpleTestCase):
    def setUp(self):
        self.t = np.arange(1, 1001, dtype=float)

    def test_signal_dominated(self):
        report = classify_regime(PropagatorSeries(0.3 * self.t ** -2.0, self.t ** -0.5))
        self.assertEqual(report.regime, Regime.SIGNAL_DOMINATED)
        u_sigma = 0.3 * math.pi ** 2 / 6
        self.assertAlmostEqual(report.u_sigma, u_sigma, delta=1e-6)
        self.assertAlmostEqual(report.loss_exponent, 0.5, delta=1e-9)
        self.assertAlmostEqual(report.predicted_coeff, 1.0 / (2.0 * (1.0 - u_sigma)), delta=1e-5)

    def test_noise_dominated(self):
        report = classify_regime(PropagatorSeries(0.3 * self.t ** -1.5, self.t ** -3.0))
        self.assertEqual(report.regime, Regime.NOISE_DOMINATED)
        self.assertAlmostEqual(report.loss_exponent, 1.5, delta=1e-9)
        self.assertAlmostEqual(report.v_sigma, 1.2020569, delta=1e-6)

    def test_divergence(self):
        report = classify_regime(PropagatorSeries(1.2 * 0.5 ** self.t, self.t ** -0.5))
        self.assertAlmostEqual(report.u_sigma, 1.2, delta=1e-9)
        self.assertEqual(report.regime, Regime.DIVERGENCE)

    def test_non_integrable_noise_diverges(self):
        report = classify_regime(PropagatorSeries(0.01 * self.t ** -0.9, self.t ** -0.5))
        self.assertEqual(report.regime, Regime.DIVERGENCE)

    def test_unclassifiable_near_one(self):
        series = PropagatorSeries(6.0 / math.pi ** 2 * self.t ** -2.0, self.t ** -0.5)
        with self.assertRaises(NumericalError):
            classify_regime(series)

    def test_non_finite_series(self):
        u = 0.1 * self.t ** -2.0
        u[-1] = np.inf
        report = classify_regime(PropagatorSeries(u, self.t ** -0.5))
        self.assertEqual(report.regime, Regime.DIVERGENCE)
        self.assertEqual(report.u_sigma, math.inf)

    def test_heavy_spectrum_diverges_immediately(self):
        problem = power_law_problem(nu=0.5, zeta=0.25, K=100)
        report = classify_regime(PropagatorSeries(0.1 * self.t ** -2.0, self.t ** -0.5), problem)
        self.assertEqual(report.regime, Regime.IMMEDIATE_DIVERGENCE)

    def test_light_spectrum_is_classified_from_series(self):
        problem = power_law_problem(nu=4.0, zeta=0.25, K=100)
        report = classify_regime(PropagatorSeries(0.3 * self.t ** -2.0, self.t ** -0.5), problem)
        self.assertEqual(report.regime, Regime.SIGNAL_DOMINATED)

    def test_short_series_rejected(self):
        with self.assertRaises(PropagatorError):
            classify_regime(PropagatorSeries(np.full(50, 0.001), np.ones(50)))

    def test_plain_gd_regimes(self):
        signal = aggregate(power_law_problem(nu=4, zeta=0.25, K=10_000), plain_gd_map(1.0), 2000, batch=100)
        report = classify_regime(signal)
        self.assertEqual(report.regime, Regime.SIGNAL_DOMINATED)
        self.assertAlmostEqual(report.loss_exponent, 0.25, delta=0.05)

        noise = aggregate(power_law_problem(nu=2, zeta=1.9, K=1000), plain_gd_algorithm(1.0), 2000, batch=4)
        report = classify_regime(noise)
        self.assertEqual(report.regime, Regime.NOISE_DOMINATED)
        self.assertAlmostEqual(report.loss_exponent, 1.5, delta=0.05)

    def test_serialized_report(self):
        report = RegimeReport(regime=Regime.DIVERGENCE, u_sigma=1.5, xi_u=2.0, xi_v=0.5)
        data = RegimeReportSerializer(report).data
        self.assertEqual(data["regime"], "divergence")
        self.assertIsNone(data["predicted_coeff"])


class FiniteMemoryAsymptoteTests(SimpleTestCase):
    def setUp(self):
        self.problem = power_law_problem(nu=2, zeta=0.5, K=16_000)

    def test_signal_scaling(self):
        first = finite_memory_asymptote(plain_gd_map(1.0), self.problem, 1.0, 1, 100.0)
        second = finite_memory_asymptote(plain_gd_map(1.0), self.problem, 1.0, 1, 200.0)
        self.assertAlmostEqual(second.v_pred / first.v_pred, 2.0 ** -0.5, delta=1e-12)
        self.assertAlmostEqual(second.u_pred / first.u_pred, 2.0 ** -1.5, delta=1e-12)

    def test_plain_gd_matches_aggregate(self):
        series = aggregate(self.problem, plain_gd_map(1.0), 1000)
        prediction = finite_memory_asymptote(plain_gd_map(1.0), self.problem, 1.0, 1, 1000.0)
        self.assertAlmostEqual(prediction.v_pred / series.v[-1], 1.0, delta=0.05)
        self.assertAlmostEqual(prediction.u_pred / series.u[-1], 1.0, delta=0.05)

    def test_heavy_ball_noise_matches_aggregate(self):
        series = aggregate(self.problem, heavy_ball_map(1.0, 0.5), 1000)
        prediction = finite_memory_asymptote(heavy_ball_map(1.0, 0.5), self.problem, 1.0, 1, 1000.0)
        self.assertAlmostEqual(prediction.u_pred / series.u[-1], 1.0, delta=0.1)

    def test_requires_meta(self):
        problem = SpectralProblem([1.0, 0.5], [1.0, 1.0])
        with self.assertRaises(PropagatorError):
            finite_memory_asymptote(plain_gd_map(1.0), problem, 1.0, 1, 10.0)

    def test_rejects_low_capacity(self):
        problem = power_law_problem(nu=0.5, zeta=0.5, K=10)
        with self.assertRaises(PropagatorError):
            finite_memory_asymptote(plain_gd_map(1.0), problem, 1.0, 1, 10.0)


class KernelsTau2Tests(SimpleTestCase):
    def test_zero_tau2_squares_kernels(self):
        alg = heavy_ball_algorithm(1.0, 0.5)
        kernels = kernels_tau2(alg, [0.1, 0.5], 30, tau2=0.0)
        pair = kernels_matrix(alg, [0.1, 0.5], 30)
        assert_allclose(kernels.g, pair.u ** 2, rtol=1e-12, atol=1e-14)
        assert_allclose(kernels.h, pair.v ** 2, rtol=1e-12, atol=1e-14)

    def test_first_step(self):
        alg = algorithm_from_corner(CornerSpec(theta=1.5, m=3))
        kernels = kernels_tau2(alg, 0.2, 3, tau2=0.0)
        self.assertAlmostEqual(kernels.g[0], alg.alpha ** 2, delta=1e-15)
        self.assertEqual(kernels.h[0], 1.0)

    def test_scalar_recursion(self):
        # (1 - alpha lambda)^2 - tau2 lambda^2 alpha^2 / |B| = 0.25 - 0.125
        kernels = kernels_tau2(plain_gd_algorithm(1.0), 0.5, 6, tau2=0.5)
        assert_allclose(kernels.g, 0.125 ** np.arange(6), rtol=1e-14)
        cancelled = kernels_tau2(plain_gd_algorithm(1.0), 0.5, 3, tau2=1.0)
        assert_allclose(cancelled.g, [1.0, 0.0, 0.0], atol=1e-15)

    def test_continuity_in_tau2(self):
        for alg, lam in ((plain_gd_algorithm(1.0), [0.1, 0.5]), (heavy_ball_algorithm(1.0, 0.5), [0.01])):
            base = kernels_tau2(alg, lam, 50, tau2=0.0)
            nudged = kernels_tau2(alg, lam, 50, tau2=1e-8)
            assert_allclose(nudged.g, base.g, rtol=1e-6)
            assert_allclose(nudged.h, base.h, rtol=1e-6)

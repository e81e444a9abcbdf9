import math
from functools import partial

import numpy as np
from django.test import SimpleTestCase, tag
from numpy.testing import assert_allclose, assert_array_equal

from contour.models import CornerSpec
from contour.utils import (
    algorithm_from_corner,
    discretize_corner,
    heavy_ball_algorithm,
    plain_gd_algorithm,
    plain_gd_map,
)
from cornersgd.exceptions import TrainingError
from propagator.models import LossTrajectory
from propagator.utils import aggregate, loss_from_propagators
from spectrum.utils import power_law_problem

from .models import GaussianSpectralModel, IndicatorModel, TrainConfig
from .serializers import LossFitSerializer, trajectory_columns
from .utils import (
    eval_schedule,
    fit_loss_exponent,
    gaussian_features,
    gaussian_sample_gradient,
    gradient_oracle,
    indicator_batch_gradient,
    indicator_hessian,
    indicator_linear_term,
    indicator_model_lambda_max,
    indicator_population_loss,
    indicator_predictions,
    indicator_target,
    learning_rate_scale,
    memory_iterates,
    run_seeds,
    scaled_algorithm,
    sgd_run,
)


def make_config(algorithm, steps, **kwargs):
    return TrainConfig(algorithm=algorithm, steps=steps, eval_steps=eval_schedule(steps), **kwargs)


def single_sample_loss(n, w, x):
    features = np.maximum(x - np.arange(1, n + 1) / n, 0.0) / n
    return 0.5 * (features @ w - indicator_target(x)) ** 2


class EvalScheduleTests(SimpleTestCase):
    def test_log_spacing(self):
        schedule = eval_schedule(10_000)
        self.assertEqual(schedule[0], 0)
        self.assertEqual(schedule[-1], 10_000)
        self.assertTrue(np.all(np.diff(schedule) > 0))
        self.assertEqual(np.sum((schedule >= 1000) & (schedule <= 10_000)), 41)

    def test_single_step(self):
        assert_array_equal(eval_schedule(1), [0, 1])

    def test_config_rejects_bad_schedule(self):
        alg = plain_gd_algorithm(1.0)
        for schedule in ([0, 5, 5], [0, 20], [3, 2]):
            with self.assertRaises(TrainingError):
                TrainConfig(algorithm=alg, steps=10, eval_steps=schedule)
        with self.assertRaises(TrainingError):
            TrainConfig(algorithm=alg, steps=10, eval_steps=[0, 10], batch=0)


class IndicatorLossTests(SimpleTestCase):
    def test_zero_weights(self):
        self.assertAlmostEqual(indicator_population_loss(IndicatorModel(50)), 0.25, places=15)
        self.assertAlmostEqual(indicator_population_loss(IndicatorModel(1)), 0.25, places=15)

    def test_matches_dense_quadrature(self):
        n = 50
        w = np.random.default_rng(3).normal(size=n)
        model = IndicatorModel(n, w)
        knots = np.arange(1, n + 1) / n
        total = 0.0
        for chunk in np.array_split(np.arange(1_000_000), 20):
            x = (chunk + 0.5) / 1_000_000
            prediction = np.maximum(x[:, None] - knots, 0.0) @ w / n
            total += np.sum((prediction - indicator_target(x)) ** 2) / 2
        self.assertAlmostEqual(indicator_population_loss(model), total / 1_000_000, delta=1e-10)

    def test_matches_quadratic_form(self):
        n = 40
        w = np.random.default_rng(4).normal(size=n)
        hessian = indicator_hessian(n)
        expected = w @ hessian @ w / 2 - indicator_linear_term(n) @ w + 0.25
        self.assertAlmostEqual(indicator_population_loss(IndicatorModel(n, w)), expected, places=12)

    def test_predictions(self):
        n = 8
        w = np.arange(1.0, n + 1)
        x = np.array([0.0, 0.1, 0.5, 0.99, 1.0])
        expected = np.maximum(x[:, None] - np.arange(1, n + 1) / n, 0.0) @ w / n
        assert_allclose(indicator_predictions(IndicatorModel(n, w), x), expected, rtol=1e-13, atol=1e-15)


class IndicatorGradientTests(SimpleTestCase):
    def test_dead_features(self):
        model = IndicatorModel(10, np.ones(10))
        gradient = indicator_batch_gradient(model, [0.01, 0.05, 0.099])
        assert_array_equal(gradient, np.zeros(10))

    def test_target_vanishes_at_one(self):
        assert_array_equal(indicator_batch_gradient(IndicatorModel(10), [1.0]), np.zeros(10))

    def test_finite_differences(self):
        n, h = 20, 1e-5
        rng = np.random.default_rng(5)
        w = rng.normal(size=n)
        for x in rng.uniform(size=3):
            gradient = indicator_batch_gradient(IndicatorModel(n, w), [x])
            numeric = np.empty(n)
            for k in range(n):
                step = np.zeros(n)
                step[k] = h
                numeric[k] = (single_sample_loss(n, w + step, x) - single_sample_loss(n, w - step, x)) / (2 * h)
            self.assertLess(np.max(np.abs(gradient - numeric)), 1e-6)

    def test_matches_explicit_features(self):
        n = 30
        rng = np.random.default_rng(6)
        w = rng.normal(size=n)
        xs = rng.uniform(size=64)
        features = np.maximum(xs[:, None] - np.arange(1, n + 1) / n, 0.0) / n
        expected = features.T @ (features @ w - indicator_target(xs)) / xs.size
        assert_allclose(indicator_batch_gradient(IndicatorModel(n, w), xs), expected, rtol=1e-10, atol=1e-14)

    def test_empty_batch(self):
        with self.assertRaises(TrainingError):
            indicator_batch_gradient(IndicatorModel(5), [])

    def test_exact_gradient_is_loss_gradient(self):
        n, h = 20, 1e-3
        w = np.random.default_rng(8).normal(size=n)
        gradient = gradient_oracle(IndicatorModel(n), 1, True)(w, None)
        numeric = np.empty(n)
        for k in range(n):
            step = np.zeros(n)
            step[k] = h
            upper = indicator_population_loss(IndicatorModel(n, w + step))
            lower = indicator_population_loss(IndicatorModel(n, w - step))
            numeric[k] = (upper - lower) / (2 * h)
        assert_allclose(gradient, numeric, atol=1e-8)

    def test_lambda_max(self):
        hessian = indicator_hessian(30)
        self.assertAlmostEqual(indicator_model_lambda_max(30), np.linalg.eigvalsh(hessian)[-1], places=14)
        self.assertAlmostEqual(learning_rate_scale(1.9), 1.0)

    def test_dense_limit(self):
        with self.assertRaises(TrainingError):
            gradient_oracle(IndicatorModel(6000), 1, True)


class GaussianModelTests(SimpleTestCase):
    def setUp(self):
        self.model = GaussianSpectralModel(power_law_problem(nu=1.5, zeta=0.5, K=8))

    def test_zero_error_has_zero_gradient(self):
        model = GaussianSpectralModel(self.model.problem, delta_w=np.zeros(8))
        gradient = gaussian_sample_gradient(model, 16, np.random.default_rng(0))
        assert_array_equal(gradient, np.zeros(8))

    def test_gradient_expectation(self):
        count = 100_000
        gradient = gaussian_sample_gradient(self.model, count, np.random.default_rng(11))
        lambdas, delta_w = self.model.lambdas, self.model.delta_w
        expected = lambdas * delta_w
        variance = np.dot(lambdas, delta_w**2)
        stderr = np.sqrt((variance * lambdas + expected**2) / count)
        self.assertTrue(np.all(np.abs(gradient - expected) <= 4 * stderr))

    def test_second_moment(self):
        count = 100_000
        features = gaussian_features(self.model, count, np.random.default_rng(12))
        residual = features @ self.model.delta_w
        variance = np.dot(self.model.lambdas, self.model.delta_w**2)
        stderr = math.sqrt(2.0) * variance / math.sqrt(count)
        self.assertLess(abs(np.mean(residual**2) - variance), 4 * stderr)


class SgdRunTests(SimpleTestCase):
    def test_zero_problem(self):
        problem = power_law_problem(nu=2, zeta=0.5, K=16)
        model = GaussianSpectralModel(problem, delta_w=np.zeros(16))
        trajectory = sgd_run(make_config(heavy_ball_algorithm(0.5, 0.5), 100, batch=4), model)
        assert_array_equal(trajectory.l, np.zeros(trajectory.l.size))
        self.assertIsNone(trajectory.diverged_at)

    def test_plain_gd_closed_form(self):
        problem = power_law_problem(nu=2, zeta=0.5, K=50)
        alpha = 1.0
        trajectory = sgd_run(make_config(plain_gd_algorithm(alpha), 500, deterministic=True), GaussianSpectralModel(problem))
        decay = (1.0 - alpha * problem.eigenvalues[:, None]) ** (2 * trajectory.steps[None, :])
        expected = 0.5 * problem.source @ decay
        assert_allclose(trajectory.l, expected, rtol=1e-10)
        self.assertEqual(trajectory.provenance, "empirical")
        self.assertEqual(len(trajectory.fingerprint), 40)

    def test_corner_parity_with_propagators(self):
        problem = power_law_problem(nu=2, zeta=0.5, K=32)
        spec = CornerSpec(theta=1.8, a=learning_rate_scale(problem.lambda_max), m=5)
        alg = algorithm_from_corner(spec)
        steps = 300
        trajectory = sgd_run(make_config(alg, steps, deterministic=True), GaussianSpectralModel(problem))
        series = aggregate(problem, alg, steps + 1)
        assert_allclose(trajectory.l, series.v[trajectory.steps] / 2, rtol=1e-8)

    def test_deterministic_given_seed(self):
        problem = power_law_problem(nu=2, zeta=0.5, K=32)
        config = make_config(heavy_ball_algorithm(0.5, 0.5), 200, batch=4, seed=42)
        first = sgd_run(config, GaussianSpectralModel(problem))
        second = sgd_run(config, GaussianSpectralModel(problem))
        assert_array_equal(first.l, second.l)
        self.assertEqual(first.fingerprint, second.fingerprint)

    def test_linear_in_target(self):
        problem = power_law_problem(nu=2, zeta=0.5, K=16)
        rng = np.random.default_rng(13)
        first, second = rng.normal(size=16), rng.normal(size=16)
        config = make_config(heavy_ball_algorithm(0.5, 0.5), 50, batch=3, seed=7)

        def final(delta_w):
            *_, (step, params) = memory_iterates(config, GaussianSpectralModel(problem, delta_w=delta_w))
            self.assertEqual(step, 50)
            return params

        assert_allclose(final(first + second), final(first) + final(second), rtol=1e-10, atol=1e-12)

    def test_divergence_truncates(self):
        problem = power_law_problem(nu=2, zeta=0.5, K=8)
        config = make_config(plain_gd_algorithm(3.0), 200, deterministic=True)
        with self.assertLogs("app", level="WARNING"):
            trajectory = sgd_run(config, GaussianSpectralModel(problem))
        self.assertIsNotNone(trajectory.diverged_at)
        self.assertEqual(trajectory.steps[-1], trajectory.diverged_at)
        self.assertGreater(trajectory.l[-1], 1e6 * trajectory.l[0])

    def test_indicator_gradient_descent_decreases(self):
        model = IndicatorModel(100)
        params = scaled_algorithm({"name": "gd"}, indicator_model_lambda_max(100))
        trajectory = sgd_run(make_config(plain_gd_algorithm(params["alpha"]), 200, deterministic=True), model)
        self.assertAlmostEqual(trajectory.l[0], 0.25, places=15)
        self.assertTrue(np.all(np.diff(trajectory.l) <= 1e-15))
        self.assertLess(trajectory.l[-1], 0.25)

    def test_scaled_algorithm(self):
        self.assertAlmostEqual(scaled_algorithm({"name": "gd"}, 1.9)["alpha"], 1.0)
        self.assertAlmostEqual(scaled_algorithm({"name": "heavy-ball", "beta": 0.5}, 1.9)["alpha"], 1.5)
        self.assertAlmostEqual(scaled_algorithm({"name": "corner", "theta": 1.8}, 3.8)["a"], 2.0)


class RunSeedsTests(SimpleTestCase):
    def setUp(self):
        self.problem = power_law_problem(nu=2, zeta=1.0, K=64)
        self.factory = partial(GaussianSpectralModel, self.problem)

    def test_independent_streams(self):
        config = make_config(plain_gd_algorithm(0.5), 100, batch=2, seed=3)
        average = run_seeds(config, self.factory, 3, workers=1)
        self.assertEqual(len(average.runs), 3)
        self.assertFalse(np.array_equal(average.runs[0].l, average.runs[1].l))
        assert_allclose(average.mean.l, np.mean([run.l for run in average.runs], axis=0))

    def test_pool_matches_inline(self):
        config = make_config(plain_gd_algorithm(0.5), 100, batch=2, seed=3)
        inline = run_seeds(config, self.factory, 2, workers=1)
        pooled = run_seeds(config, self.factory, 2, workers=2)
        assert_array_equal(inline.mean.l, pooled.mean.l)

    def test_larger_batch_lowers_the_noise(self):
        late = {}
        for batch in (1, 8):
            config = make_config(plain_gd_algorithm(0.5), 300, batch=batch, seed=21)
            average = run_seeds(config, self.factory, 10, workers=1)
            late[batch] = np.mean(average.mean.l[-20:])
        self.assertGreater(late[1], late[8])


class FitLossExponentTests(SimpleTestCase):
    def test_exact_power_law(self):
        steps = eval_schedule(10_000)
        losses = np.concatenate(([3.0], 3.0 * steps[1:].astype(float) ** -0.45))
        fit = fit_loss_exponent(LossTrajectory(l=losses, steps=steps), 10, 10_000)
        self.assertAlmostEqual(fit.exponent, 0.45, delta=1e-9)
        data = LossFitSerializer(fit).data
        self.assertEqual(data["points"], fit.points)

    def test_smoothing_matches_explicit_windows(self):
        steps = eval_schedule(5000)
        losses = steps.clip(1).astype(float) ** -0.3 * np.exp(np.random.default_rng(7).normal(0.0, 0.2, steps.size))
        width = math.sqrt(3.0)

        keep = steps >= 10
        log_t, log_l = np.log(steps[keep]), np.log(losses[keep])
        window = np.abs(log_t[:, None] - log_t[None, :]) <= math.log(width)
        sizes = window.sum(axis=1)
        expected = np.polyfit(window @ log_t / sizes, window @ log_l / sizes, 1)[0]

        fit = fit_loss_exponent(LossTrajectory(l=losses, steps=steps), 10, 5000, width)
        self.assertAlmostEqual(fit.exponent, -expected, delta=1e-10)

    def test_small_window_rejected(self):
        steps = eval_schedule(10_000)
        losses = np.ones(steps.size)
        with self.assertRaises(TrainingError):
            fit_loss_exponent(LossTrajectory(l=losses, steps=steps), 100, 150)

    def test_plain_gd_theory_trajectory(self):
        problem = power_law_problem(nu=4, zeta=0.25, K=10_000)
        series = aggregate(problem, plain_gd_map(1.0), 2000, batch=100)
        trajectory = loss_from_propagators(series, 2000)
        self.assertAlmostEqual(fit_loss_exponent(trajectory, 100, 2000).exponent, 0.25, delta=0.02)

    @tag("slow")
    def test_corner_theory_trajectory(self):
        problem = power_law_problem(nu=4, zeta=0.25, K=10_000)
        spec = CornerSpec(theta=1.8, a=learning_rate_scale(problem.eigenvalues[0]), m=5)
        series = aggregate(problem, discretize_corner(spec), 10_000, batch=100)
        trajectory = loss_from_propagators(series, 10_000)
        # theta * zeta, approached from below at this memory size
        self.assertAlmostEqual(fit_loss_exponent(trajectory, 100, 10_000).exponent, 0.45, delta=0.03)

    def test_trajectory_columns(self):
        trajectory = LossTrajectory(l=[1.0, 0.5], steps=[0, 4])
        columns = trajectory_columns(trajectory)
        self.assertEqual(list(columns), ["step", "loss"])
        assert_array_equal(columns["step"], [0, 4])


class IndicatorTrainingTests(SimpleTestCase):
    @tag("slow")
    def test_corner_accelerates_indicator_fit(self):
        n, steps, batch = 2000, 20_000, 100
        scale = learning_rate_scale(indicator_model_lambda_max(n))
        factory = partial(IndicatorModel, n)
        algorithms = {
            "plain": plain_gd_algorithm(1.0 / scale),
            "corner": algorithm_from_corner(CornerSpec(theta=1.8, a=scale, m=5)),
        }
        exponents = {}
        for name, alg in algorithms.items():
            config = make_config(alg, steps, batch=batch, seed=2024)
            average = run_seeds(config, factory, 5, workers=1)
            self.assertIsNone(average.mean.diverged_at)
            exponents[name] = fit_loss_exponent(average.mean, 100, steps).exponent
        self.assertAlmostEqual(exponents["plain"], 0.25, delta=0.05)
        self.assertGreaterEqual(exponents["corner"], 0.37)
        self.assertAlmostEqual(exponents["corner"], 0.45, delta=0.08)

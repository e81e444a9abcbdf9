import math

import numpy as np
from django.test import SimpleTestCase, tag
from numpy.testing import assert_allclose
from scipy.integrate import quad
from scipy.stats import linregress

from contour.models import CornerSpec
from contour.utils import corner_map_eval
from cornersgd.exceptions import TheoryError
from propagator.utils import aggregate
from spectrum.utils import power_law_problem

from .models import CornerAsymptotics, Region
from .serializers import CornerAsymptoticsSerializer, PhaseCellSerializer, phase_columns
from .utils import (
    c_psi_template,
    c_u_coefficient,
    c_v_coefficient,
    corner_asymptotics,
    f_u,
    f_v,
    mittag_leffler,
    phase_cell,
    phase_sweep,
    predicted_exponents,
    theta_max,
)

THETAS = (1.3, 1.5, 1.8)


class CPsiTemplateTests(SimpleTestCase):
    def test_values(self):
        self.assertAlmostEqual(c_psi_template(1.5, 1.0), 2.0 / math.pi, places=14)
        self.assertAlmostEqual(c_psi_template(1.8, 2.0), 1.870979, places=5)
        self.assertAlmostEqual(c_psi_template(1.99, 1.0), 1.0, delta=2e-4)

    def test_matches_corner_map_near_one(self):
        eps = 1e-4
        for theta, a in ((1.5, 1.0), (1.8, 2.0)):
            value = corner_map_eval(theta, a, 1.0 + eps)
            expected = -c_psi_template(theta, a) * eps**theta
            self.assertAlmostEqual(value.real / expected, 1.0, delta=1e-2)

    def test_rejects_theta_outside(self):
        for theta in (1.0, 2.0):
            with self.assertRaises(TheoryError):
                c_psi_template(theta, 1.0)
        with self.assertRaises(TheoryError):
            c_psi_template(1.5, 0.0)


class MittagLefflerTests(SimpleTestCase):
    def test_value_at_zero(self):
        self.assertAlmostEqual(mittag_leffler(0.0, 1.5, 1.0), 1.0, places=15)
        self.assertAlmostEqual(mittag_leffler(0.0, 1.5, 1.5), 1.0 / math.gamma(1.5), places=15)

    def test_series_agrees_with_integral(self):
        x = np.array([0.5, 2.0, 5.0, 8.0])
        for theta in THETAS:
            for beta in (theta, 1.0):
                series = mittag_leffler(x, theta, beta, method="series")
                integral = mittag_leffler(x, theta, beta, method="integral")
                assert_allclose(series, integral, rtol=1e-6, atol=1e-12)

    def test_asymptotic_agrees_with_integral(self):
        x = np.array([1000.0, 2000.0, 5000.0])
        for theta in THETAS:
            for beta in (theta, 1.0):
                asymptotic = mittag_leffler(x, theta, beta, method="asymptotic")
                integral = mittag_leffler(x, theta, beta, method="integral")
                assert_allclose(asymptotic, integral, rtol=1e-6, atol=1e-12)

    def test_default_branches_join(self):
        for theta in THETAS:
            for edge in (5.0, 1000.0):
                below, above = mittag_leffler(np.array([edge * (1 - 1e-9), edge * (1 + 1e-9)]), theta, 1.0)
                assert_allclose(below, above, rtol=1e-6, atol=1e-12)

    def test_keeps_shape(self):
        x = np.linspace(0.0, 3000.0, 12).reshape(3, 4)
        self.assertEqual(mittag_leffler(x, 1.5, 1.5).shape, (3, 4))
        self.assertIsInstance(mittag_leffler(3.0, 1.5), float)

    def test_rejects_bad_input(self):
        with self.assertRaises(TheoryError):
            mittag_leffler(-1.0, 1.5)
        with self.assertRaises(TheoryError):
            mittag_leffler(1.0, 2.5)
        with self.assertRaises(TheoryError):
            mittag_leffler(1.0, 1.5, method="pade")


class KernelFunctionTests(SimpleTestCase):
    def test_vanish_before_origin(self):
        self.assertEqual(f_u(-1.0, 1.5, 1.0), 0.0)
        self.assertEqual(f_u(0.0, 1.5, 1.0), 0.0)
        self.assertEqual(f_v(-1.0, 1.5, 1.0), 0.0)
        self.assertAlmostEqual(f_v(1e-9, 1.5, 1.0), 1.0, places=12)

    def test_small_r_forms(self):
        r = 1e-3
        for theta in THETAS:
            expected = r ** (theta - 1.0) / math.gamma(theta)
            self.assertAlmostEqual(f_u(r, theta, 1.0) / expected, 1.0, delta=1e-2)
            self.assertAlmostEqual(f_v(r, theta, 1.0), 1.0, delta=1e-2)

    def test_large_r_forms(self):
        r = 1e3
        for theta in THETAS:
            u_expected = -1.0 / math.gamma(-theta) * r ** (-theta - 1.0)
            v_expected = 1.0 / math.gamma(1.0 - theta) * r**-theta
            self.assertAlmostEqual(f_u(r, theta, 1.0) / u_expected, 1.0, delta=0.05)
            self.assertAlmostEqual(f_v(r, theta, 1.0) / v_expected, 1.0, delta=0.05)

    def test_laplace_transforms(self):
        s = 2.0
        for theta in THETAS:
            c = c_psi_template(theta, 1.0)
            u_value = quad(lambda r: math.exp(-s * r) * f_u(r, theta, c), 0.0, 50.0, epsabs=1e-12, limit=200)[0]
            v_value = quad(lambda r: math.exp(-s * r) * f_v(r, theta, c), 0.0, 50.0, epsabs=1e-12, limit=200)[0]
            self.assertAlmostEqual(u_value, 1.0 / (c * s**theta + 1.0), delta=1e-7)
            self.assertAlmostEqual(v_value, s ** (theta - 1.0) / (s**theta + 1.0 / c), delta=1e-7)

    def test_arrays(self):
        r = np.array([-1.0, 0.0, 0.5, 3.0, 40.0])
        values = f_v(r, 1.5, 0.7)
        self.assertEqual(values.shape, (5,))
        self.assertAlmostEqual(values[3], f_v(3.0, 1.5, 0.7), places=12)


class CoefficientTests(SimpleTestCase):
    def test_positive_and_finite(self):
        for theta in THETAS:
            c_u = c_u_coefficient(theta, 4.0)
            c_v = c_v_coefficient(theta, 0.25)
            self.assertTrue(0 < c_u < math.inf)
            self.assertTrue(0 < c_v < math.inf)

    def test_batch_halves_c_u(self):
        single = c_u_coefficient(1.5, 4.0, batch=1)
        self.assertEqual(c_u_coefficient(1.5, 4.0, batch=2), single / 2)

    def test_c_v_linear_in_source(self):
        single = c_v_coefficient(1.5, 0.25, Qsrc=1.0)
        self.assertAlmostEqual(c_v_coefficient(1.5, 0.25, Qsrc=3.0) / single, 3.0, places=12)

    def test_stable_under_node_doubling(self):
        for coefficient, args in ((c_u_coefficient, (1.5, 4.0)), (c_v_coefficient, (1.5, 0.25))):
            coarse = coefficient(*args, nodes=400)
            fine = coefficient(*args, nodes=800)
            self.assertLess(abs(fine / coarse - 1.0), 1e-4)

    def test_rejects_divergent_parameters(self):
        with self.assertRaises(TheoryError):
            c_u_coefficient(1.5, 1.0)
        with self.assertRaises(TheoryError):
            c_u_coefficient(2.0, 4.0)
        with self.assertRaises(TheoryError):
            c_v_coefficient(1.5, 2.0)
        with self.assertRaises(TheoryError):
            c_v_coefficient(1.5, 0.0)

    def test_corner_asymptotics(self):
        result = corner_asymptotics(1.5, 1.0, 4.0, 0.25, tau1=0.5, batch=3)
        self.assertIsInstance(result, CornerAsymptotics)
        self.assertAlmostEqual(result.c_psi, 2.0 / math.pi)
        self.assertAlmostEqual(result.c_u, c_u_coefficient(1.5, 4.0, tau1=0.5, batch=3, c_psi=result.c_psi))
        self.assertEqual(result.exponents, predicted_exponents(1.5, 4.0, 0.25))
        self.assertEqual(predicted_exponents(1.5, 4.0, 0.25), (0.375, 1.625))
        data = CornerAsymptoticsSerializer(result).data
        self.assertEqual(data["batch"], 3)
        self.assertEqual(data["exponents"], {"V": 0.375, "U": 1.625})

    @tag("slow")
    def test_ideal_corner_matches_aggregate(self):
        problem = power_law_problem(nu=4, zeta=0.25, K=10_000)
        series = aggregate(problem, CornerSpec(theta=1.5, a=1.0), 10_000)
        expected = corner_asymptotics(1.5, 1.0, 4.0, 0.25)
        t = series.steps
        fit = (t >= 100) & (t <= 10_000)
        v_slope = linregress(np.log(t[fit]), np.log(series.v[fit])).slope
        u_slope = linregress(np.log(t[fit]), np.log(series.u[fit])).slope
        self.assertAlmostEqual(-v_slope, 0.375, delta=0.03)
        self.assertAlmostEqual(-u_slope, 1.625, delta=0.05)
        last = t >= 1000
        v_plateau = np.median(series.v[last] * t[last] ** 0.375)
        u_plateau = np.median(series.u[last] * t[last] ** 1.625)
        self.assertAlmostEqual(v_plateau / expected.c_v, 1.0, delta=0.1)
        self.assertAlmostEqual(u_plateau / expected.c_u, 1.0, delta=0.1)


class ThetaMaxTests(SimpleTestCase):
    def test_region_examples(self):
        cell = theta_max(0.25, 4.0)
        self.assertEqual((cell.theta_max, cell.subregion), (2.0, Region.I_FULL))
        cell = theta_max(0.25, 1.3)
        self.assertEqual((cell.theta_max, cell.subregion), (1.3, Region.III_USIGMA_LIMITED))
        cell = theta_max(1.0, 2.0)
        self.assertAlmostEqual(cell.theta_max, 4.0 / 3.0)
        self.assertEqual(cell.subregion, Region.II_BALANCED)

    def test_outside_signal_phase(self):
        for zeta, nu in ((1.9, 2.0), (0.5, 1.0), (0.5, 0.8)):
            cell = theta_max(zeta, nu)
            self.assertEqual(cell.subregion, Region.OUTSIDE)
            self.assertTrue(math.isnan(cell.theta_max))
        with self.assertRaises(TheoryError):
            theta_max(0.5, 0.0)

    def test_boundaries_meet_at_half(self):
        self.assertEqual(phase_cell(0.5, 0.5).theta_max, 2.0)
        self.assertEqual(phase_cell(0.4, 0.45).subregion, Region.I_FULL)
        self.assertEqual(phase_cell(0.4, 0.55).subregion, Region.III_USIGMA_LIMITED)
        self.assertEqual(phase_cell(0.6, 0.45).subregion, Region.II_BALANCED)
        self.assertEqual(phase_cell(0.6, 0.55).subregion, Region.II_BALANCED)

    def test_continuous_across_boundaries(self):
        delta = 1e-9
        # I / II at zeta = 1 - 1/nu
        self.assertAlmostEqual(phase_cell(0.7 - delta, 0.3).theta_max, phase_cell(0.7 + delta, 0.3).theta_max, places=7)
        # I / III at nu = 2
        self.assertAlmostEqual(phase_cell(0.2, 0.5 - delta).theta_max, phase_cell(0.2, 0.5 + delta).theta_max, places=7)

    def test_monotone(self):
        zetas = np.linspace(0.05, 1.95, 39)
        inv_nus = np.linspace(0.0, 0.95, 20)
        grid = np.array([cell.theta_max for cell in phase_sweep(zetas, inv_nus)]).reshape(zetas.size, inv_nus.size)
        for row in range(zetas.size):
            values = grid[row][np.isfinite(grid[row])]
            # theta_max grows with nu, i.e. falls with 1/nu
            self.assertTrue(np.all(np.diff(values) <= 1e-15))
        for column in range(inv_nus.size):
            values = grid[:, column][np.isfinite(grid[:, column])]
            self.assertTrue(np.all(np.diff(values) <= 1e-15))

    def test_sweep_examples(self):
        cells = phase_sweep([1.5, 1.9], [0.4, 0.5])
        self.assertEqual([(cell.zeta, cell.inv_nu) for cell in cells], [(1.5, 0.4), (1.5, 0.5), (1.9, 0.4), (1.9, 0.5)])
        self.assertEqual(cells[0].subregion, Region.II_BALANCED)
        self.assertAlmostEqual(cells[0].theta_max, 2.0 / 1.9)
        self.assertEqual(cells[3].subregion, Region.OUTSIDE)

    def test_serialization(self):
        cells = phase_sweep([0.25, 1.9], [0.25, 0.5])
        data = PhaseCellSerializer(cells, many=True).data
        self.assertEqual(data[0]["region"], "I_full")
        self.assertEqual(data[0]["theta_max"], 2.0)
        self.assertIsNone(data[3]["theta_max"])
        self.assertEqual(data[3]["region"], "outside")
        columns = phase_columns(cells)
        self.assertEqual(list(columns), ["zeta", "inv_nu", "theta_max", "region"])
        self.assertEqual(columns["region"][3], "outside")

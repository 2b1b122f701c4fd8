import math
import mock
import unittest

import numpy as np

import agesize.model.spectral as spectral
from agesize.core.exceptions import (
    AssumptionViolation,
    BracketFailure,
    ConfigError,
    NegativeInput,
    WeightDivergence,
)
from agesize.model import cycle, quadrature
from agesize.model.growth import GrowthLaw


def affine_fixture():
    law = GrowthLaw.affine(1.0, 0.5, 0.8, 1.2)
    model = cycle.ConstantDeltaCycle(law, cycle.ScalarDensity.beta(0.8, 1.2))
    return law, model, quadrature.QuadratureGrid.with_size(0.8, 1.2, 64)


def exponential_fixture():
    x_lo, x_hi = cycle.TargetSizeCycle.window(1.0, 0.5, 1.0, 0.1)
    law = GrowthLaw.exponential(1.0, x_lo, x_hi)
    model = cycle.TargetSizeCycle(law, 0.5, 1.0,
                                  cycle.ScalarDensity.beta(-0.1, 0.1))
    return law, model, quadrature.QuadratureGrid.with_size(x_lo, x_hi, 64)


class TestSpectralRadius(unittest.TestCase):

    def test_golden_ratio(self):
        golden = 0.5 * (1.0 + math.sqrt(5.0))
        result = spectral.spectral_radius(np.array([[1.0, 1.0], [1.0, 0.0]]))
        self.assertTrue(result.converged)
        self.assertAlmostEqual(result.radius, golden, places=10)
        np.testing.assert_allclose(result.vector, [1.0, 1.0 / golden],
                                   atol=1e-9)

    def test_zero_matrix(self):
        result = spectral.spectral_radius(np.zeros((3, 3)))
        self.assertEqual(result.radius, 0.0)
        self.assertTrue(result.converged)

    def test_not_converged(self):
        matrix = np.array([[1.0, 1.0], [1.0, 0.0]])
        with self.assertLogs('agesize.model.spectral', 'WARNING'):
            result = spectral.spectral_radius(matrix, max_iter=2)
        self.assertFalse(result.converged)
        self.assertEqual(result.iterations, 2)

    def test_start_vector(self):
        matrix = np.array([[0.0, 2.0], [2.0, 0.0]])
        result = spectral.spectral_radius(matrix, start=[1.0, 1.0])
        self.assertEqual(result.iterations, 2)
        self.assertEqual(result.radius, 2.0)


class TestRenewalOperator(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.law, cls.model, cls.grid = affine_fixture()
        cls.op = spectral.RenewalOperator(cls.law, cls.model, cls.grid)

    def test_K0_rows_sum_to_two(self):
        K0 = self.op.K(0.0)
        self.assertTrue(np.all(K0 >= 0))
        np.testing.assert_allclose(K0.sum(axis=1), 2.0, atol=1e-7)
        self.assertAlmostEqual(spectral.spectral_radius(K0).radius, 2.0,
                               delta=1e-6)

    def test_upper_bracket(self):
        a_lo = float(np.min(self.op.a_lo))
        radius = spectral.spectral_radius(
            self.op.K(math.log(4.0) / a_lo)).radius
        self.assertLessEqual(radius, 0.5 + 1e-6)

    def test_adjoint(self):
        self.assertLess(self.op.adjoint_gap(0.7, pairs=20), 1e-8)
        w = self.grid.weights
        np.testing.assert_allclose(self.op.J(0.7) * w[:, None],
                                   (self.op.K(0.7) * w[:, None]).T,
                                   rtol=1e-12, atol=1e-15)

    def test_kernel_diagonal_positive(self):
        inner = self.grid.nodes[1:-1]
        self.assertTrue(np.all(self.op.kernel(inner, inner, 0.5) > 0))

    def test_thread_count_does_not_change_the_matrix(self):
        threaded = spectral.RenewalOperator(self.law, self.model, self.grid,
                                            threads=4)
        np.testing.assert_array_equal(threaded.K(0.3), self.op.K(0.3))

    def test_wrappers(self):
        np.testing.assert_array_equal(
            spectral.build_K(self.law, self.model, self.grid, 0.2),
            self.op.K(0.2))
        np.testing.assert_array_equal(
            spectral.build_J(self.law, self.model, self.grid, 0.2),
            self.op.J(0.2))

    def test_assumptions_are_checked(self):
        law = GrowthLaw.exponential(1.0, 1.0, 1.5)
        model = cycle.ConstantDeltaCycle(
            law, cycle.ScalarDensity.uniform(0.5, 1.5))
        grid = quadrature.QuadratureGrid.with_size(1.0, 1.5, 16)
        with self.assertRaises(AssumptionViolation) as e:
            spectral.RenewalOperator(law, model, grid)
        self.assertFalse(e.exception.report.ok)
        spectral.RenewalOperator(law, model, grid, check=False)


class TestSolveMalthus(unittest.TestCase):

    def test_exponential_growth_rate_is_kappa(self):
        law, model, _ = exponential_fixture()
        grid = quadrature.QuadratureGrid.with_size(law.x_lo, law.x_hi, 256)
        solution = spectral.solve_malthus(law, model, grid)
        self.assertAlmostEqual(solution.lam, 1.0, delta=1e-6)
        ratio = solution.v_tilde / grid.nodes
        self.assertLess(np.ptp(ratio) / np.mean(ratio), 1e-5)
        self.assertEqual(solution.history[0][0], 0.0)
        self.assertLess(solution.residuals['r_K'], 1e-8)

    def test_bracket_failures(self):
        law, model, grid = affine_fixture()
        op = mock.Mock(a_lo=np.array([0.5]))
        op.K.return_value = np.array([[0.5]])
        with self.assertRaises(BracketFailure):
            spectral.solve_malthus(law, model, grid, operator=op)
        op.K.return_value = np.array([[3.0]])
        with self.assertRaises(BracketFailure):
            spectral.solve_malthus(law, model, grid, operator=op)


class TestSolve(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.law, cls.model, cls.grid = affine_fixture()
        cls.solution = spectral.solve(cls.law, cls.model, cls.grid,
                                      levels=96)

    def test_growth_rate_is_a_root(self):
        s = self.solution
        self.assertGreater(s.lam, 0.0)
        op = spectral.RenewalOperator(self.law, self.model, self.grid)
        self.assertAlmostEqual(
            spectral.spectral_radius(op.K(s.lam)).radius, 1.0, delta=1e-8)
        self.assertLess(s.residuals['r_J'], 1e-8)
        self.assertLess(s.residuals['adjoint_gap'], 1e-8)

    def test_profiles(self):
        s = self.solution
        self.assertTrue(np.all(s.f_tilde > 0))
        self.assertAlmostEqual(self.grid.integrate(s.f_tilde), 1.0,
                               places=12)
        self.assertAlmostEqual(np.max(s.v_tilde), 1.0, places=12)
        self.assertGreater(self.grid.inner(s.f_tilde, s.v_tilde), 0.0)
        np.testing.assert_allclose(
            s.f_tilde, spectral.stationary_birth_profile(
                self.law, self.model, self.grid, s.lam), rtol=1e-8)

    def test_dual_eigenfunction_starts_at_v_tilde(self):
        s = self.solution
        self.assertEqual(s.v_full.shape, (self.grid.n, 96))
        np.testing.assert_allclose(s.v_full[:, 0], s.v_tilde, rtol=1e-4)
        self.assertTrue(np.all(s.v_full >= 0))
        # nothing left to divide past the longest cycle
        np.testing.assert_array_equal(s.v_full[:, -1], 0.0)

    def test_stable_distribution(self):
        s = self.solution
        self.assertAlmostEqual(
            quadrature.integrate_table(self.grid, s.ages,
                                       s.f_full * s.v_full), 1.0,
            places=12)
        hi = np.asarray(self.model.support(self.grid.nodes)[1])
        beyond = s.ages.ages[None, :] > hi[:, None]
        self.assertTrue(np.all(s.f_full[beyond] == 0))
        ratio = s.f_full[:, 1] / s.f_full[:, 0]
        np.testing.assert_allclose(ratio, math.exp(-s.lam * s.ages.da),
                                   rtol=1e-12)

    def test_diagnostics(self):
        s = self.solution
        c1, c2 = s.phi_sandwich
        self.assertTrue(0 < c1 <= c2)
        self.assertAlmostEqual(s.mean_cycle, self.model.mean_cycle_length())
        self.assertEqual(s.phi_table.shape, s.v_full.shape)

    def test_aeg_functional(self):
        s = self.solution
        u0 = np.zeros_like(s.v_full)
        self.assertEqual(spectral.aeg_functional(
            u0, s.v_full, self.model, self.grid, s.ages), 0.0)
        u0[:, 0] = 1.0
        expected = quadrature.integrate_table(self.grid, s.ages,
                                              u0 * s.v_full)
        self.assertAlmostEqual(spectral.aeg_functional(
            u0, s.v_full, self.model, self.grid, s.ages), expected,
            places=12)
        with self.assertRaises(NegativeInput):
            spectral.aeg_functional(-u0, s.v_full, self.model, self.grid,
                                    s.ages)
        u0[:, -1] = 1.0
        with self.assertRaises(WeightDivergence):
            spectral.aeg_functional(u0, s.v_full, self.model, self.grid,
                                    s.ages)

    def test_mass_on_the_last_cell(self):
        s = self.solution
        a_hi = np.asarray(self.model.support(self.grid.nodes)[1])
        last = s.ages.last_cell(a_hi)
        self.assertTrue(np.all(last.sum(axis=1) == 1))
        self.assertTrue(np.all(s.phi_table[last] > 0))
        u0 = np.zeros_like(s.v_full)
        u0[3, np.flatnonzero(last[3])[0]] = 1e-6
        with self.assertRaises(WeightDivergence):
            spectral.aeg_functional(u0, s.v_full, self.model, self.grid,
                                    s.ages)
        younger = np.roll(last, -1, axis=1).astype(float)
        self.assertGreater(spectral.aeg_functional(
            younger, s.v_full, self.model, self.grid, s.ages), 0.0)


class TestLevelRule(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.law, cls.model, cls.grid = affine_fixture()
        cls.ages = spectral.age_grid(cls.model, 96)
        cls.op = spectral.RenewalOperator(cls.law, cls.model, cls.grid,
                                          ages=cls.ages)
        cls.solution = spectral.solve(cls.law, cls.model, cls.grid,
                                      levels=96, age_rule='levels')

    def test_entries_sit_on_the_levels(self):
        levels = self.op.levels
        self.assertGreaterEqual(levels.min(), 1)
        self.assertLess(levels.max(), 96)
        np.testing.assert_allclose(self.op.K(0.0).sum(axis=1), 2.0,
                                   rtol=1e-2)

    def test_close_to_the_gauss_rule(self):
        gauss = spectral.solve_malthus(self.law, self.model, self.grid)
        s = self.solution
        self.assertEqual(s.age_rule, 'levels')
        self.assertAlmostEqual(s.lam / gauss.lam, 1.0, delta=1e-3)
        self.assertLess(s.residuals['r_K'], 1e-8)

    def test_dual_starts_at_v_tilde(self):
        s = self.solution
        np.testing.assert_allclose(s.v_full[:, 0], s.v_tilde, rtol=1e-6)
        np.testing.assert_array_equal(s.v_full[:, -1], 0.0)
        self.assertTrue(np.all(s.v_full >= 0))

    def test_dual_recursion(self):
        s = self.solution
        sums = self.op.level_sums(s.v_tilde)
        decay = math.exp(-s.lam * self.ages.da)
        np.testing.assert_allclose(s.v_full[:, :-1],
                                   decay * (sums[:, 1:] + s.v_full[:, 1:]),
                                   rtol=1e-12, atol=1e-15)

    def test_threads(self):
        threaded = spectral.RenewalOperator(self.law, self.model, self.grid,
                                            ages=self.ages, threads=3)
        np.testing.assert_array_equal(threaded.K(0.4), self.op.K(0.4))

    def test_unknown_rule(self):
        with self.assertRaises(ConfigError):
            spectral.solve(self.law, self.model, self.grid, levels=16,
                           age_rule='simpson')

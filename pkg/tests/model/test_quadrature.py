import unittest

import numpy as np

import agesize.model.quadrature as quadrature
from agesize.core.exceptions import ConfigError


class TestGaussLegendre(unittest.TestCase):

    def test_reference_rule_is_cached_and_frozen(self):
        nodes, weights = quadrature.gauss_legendre(8)
        self.assertIs(quadrature.gauss_legendre(8)[0], nodes)
        self.assertAlmostEqual(weights.sum(), 2.0, places=14)
        with self.assertRaises(ValueError):
            nodes[0] = 0.0

    def test_composite_integrates_polynomials(self):
        value = quadrature.integrate(lambda x: x ** 5 - 3 * x, 1.0, 2.0,
                                     panels=2, order=4)
        self.assertAlmostEqual(value, (64 - 1) / 6.0 - 4.5, places=12)

    def test_composite_broadcasts_limits(self):
        lo = np.array([0.0, 1.0, 2.0])
        hi = np.array([1.0, 3.0, 2.0])
        nodes, weights = quadrature.composite_gauss_legendre(lo, hi, 3, 5)
        self.assertEqual(nodes.shape, (3, 15))
        np.testing.assert_allclose(weights.sum(axis=-1), [1.0, 2.0, 0.0],
                                   atol=1e-14)
        self.assertTrue(np.all(nodes[1] > 1.0) and np.all(nodes[1] < 3.0))

    def test_integrate_exponential(self):
        value = quadrature.integrate(np.exp, 0.0, np.log(2.0))
        self.assertAlmostEqual(value, 1.0, places=14)


class TestQuadratureGrid(unittest.TestCase):

    def setUp(self):
        self.grid = quadrature.QuadratureGrid(1.0, 2.0, panels=4, order=16)

    def test_bad_grids(self):
        with self.assertRaises(ConfigError):
            quadrature.QuadratureGrid(2.0, 1.0)
        with self.assertRaises(ConfigError):
            quadrature.QuadratureGrid(0.0, 1.0)
        with self.assertRaises(ConfigError):
            quadrature.QuadratureGrid(1.0, 2.0, panels=0)

    def test_nodes_and_weights(self):
        grid = self.grid
        self.assertEqual(grid.n, 64)
        self.assertTrue(np.all(np.diff(grid.nodes) > 0))
        self.assertTrue(grid.nodes[0] > 1.0 and grid.nodes[-1] < 2.0)
        self.assertTrue(np.all(grid.weights > 0))
        self.assertAlmostEqual(grid.weights.sum(), 1.0, places=14)
        with self.assertRaises(ValueError):
            grid.weights[0] = 1.0

    def test_with_size(self):
        grid = quadrature.QuadratureGrid.with_size(1.0, 2.0, 128)
        self.assertEqual(grid.n, 128)
        self.assertEqual(grid.order, 32)
        small = quadrature.QuadratureGrid.with_size(1.0, 2.0, 10)
        self.assertEqual((small.panels, small.n), (1, 10))

    def test_integrate_matches_interpolant(self):
        grid = self.grid
        # exact for the piecewise linear reading of linear functions
        # away from the constant end caps
        values = np.full(grid.n, 3.0)
        self.assertAlmostEqual(grid.integrate(values), 3.0, places=13)
        smooth = grid.integrate(np.exp(grid.nodes))
        self.assertAlmostEqual(smooth, np.e ** 2 - np.e, places=3)

    def test_integrate_table_axis(self):
        grid = self.grid
        table = np.outer(np.ones(grid.n), [1.0, 2.0])
        np.testing.assert_allclose(grid.integrate(table), [1.0, 2.0])
        np.testing.assert_allclose(grid.integrate(table.T, axis=1),
                                   [1.0, 2.0])

    def test_hat_and_interpolate(self):
        grid = self.grid
        values = 2.0 * grid.nodes + 1.0
        points = np.array([[1.3, 1.7], [grid.nodes[5], 1.5]])
        np.testing.assert_allclose(grid.interpolate(values, points),
                                   2.0 * points + 1.0, rtol=1e-14)
        left, right, wl, wr = grid.hat([0.5, 2.5])
        np.testing.assert_array_equal(left, [0, grid.n - 2])
        np.testing.assert_allclose(wl + wr, 1.0)
        np.testing.assert_allclose(
            grid.interpolate(values, [0.5, 2.5]), values[[0, -1]])

    def test_inner_and_norm(self):
        grid = self.grid
        f = np.ones(grid.n)
        self.assertAlmostEqual(grid.inner(f, 2 * f), 2.0, places=13)
        self.assertAlmostEqual(grid.norm(3 * f), 3.0, places=13)

    def test_cdf(self):
        grid = self.grid
        cdf = grid.cdf(np.ones(grid.n))
        self.assertTrue(np.all(np.diff(cdf) > 0))
        np.testing.assert_allclose(cdf, grid.nodes - 1.0, atol=1e-14)
        self.assertTrue(cdf[-1] < 1.0)


class TestAgeGrid(unittest.TestCase):

    def test_levels(self):
        ages = quadrature.AgeGrid(2.0, levels=5)
        np.testing.assert_allclose(ages.ages, [0.0, 0.5, 1.0, 1.5, 2.0])
        self.assertEqual(ages.da, 0.5)
        with self.assertRaises(ConfigError):
            quadrature.AgeGrid(0.0)
        with self.assertRaises(ConfigError):
            quadrature.AgeGrid(1.0, levels=1)

    def test_mask_and_last_cell(self):
        ages = quadrature.AgeGrid(2.0, levels=5)
        mask = ages.mask([0.7, 2.0])
        np.testing.assert_array_equal(mask, [[1, 1, 0, 0, 0],
                                             [1, 1, 1, 1, 1]])
        last = ages.last_cell([0.7, 2.0])
        np.testing.assert_array_equal(last, [[0, 1, 0, 0, 0],
                                             [0, 0, 0, 0, 1]])

    def test_integrate_table(self):
        grid = quadrature.QuadratureGrid(1.0, 3.0, panels=1, order=8)
        ages = quadrature.AgeGrid(1.0, levels=11)
        table = np.ones((grid.n, ages.levels))
        # rectangle rule over all levels
        self.assertAlmostEqual(
            quadrature.integrate_table(grid, ages, table), 2.0 * 1.1,
            places=13)

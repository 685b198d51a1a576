"""
Tests for the reference oracles themselves.
"""
import numpy as np
from django.test import SimpleTestCase

from builders.least_squares import build_constrained_ls
from builders.synthetic import planted_linear_system
from geometry.sets import NonnegativeOrthant
from oracles.reference import (
    finite_diff_subgradient_check,
    oracle_ellipsoid_min,
    oracle_feasibility_cyclic,
    oracle_small_lp,
)
from problems.exceptions import OracleFailure


class CyclicFeasibilityTest(SimpleTestCase):
    """Cyclic projections"""

    def test_planted_system(self):
        """Reaches the tolerance and reports the sweeps used"""
        system = planted_linear_system(20, 10, 6, seed=0)
        problem = build_constrained_ls(system['A'], system['b'], system['C'], system['d'])
        result = oracle_feasibility_cyclic(problem, tol=1e-8)
        self.assertLessEqual(result.value, 1e-8)
        self.assertGreater(result.notes['sweeps'], 0)
        np.testing.assert_allclose(result.point, system['solution'], atol=1e-6)

    def test_simple_set(self):
        """Projects onto Y after each sweep"""
        problem = build_constrained_ls(np.array([[1.0, 1.0]]), [1.0], simple_set=NonnegativeOrthant())
        result = oracle_feasibility_cyclic(problem, tol=1e-10, x0=[3.0, -1.0])
        self.assertTrue(np.all(result.point >= 0))
        self.assertAlmostEqual(result.point.sum(), 1.0)

    def test_sweep_cap(self):
        """An inconsistent system exhausts the cap"""
        problem = build_constrained_ls(np.array([[1.0], [1.0]]), [0.0, 1.0])
        with self.assertRaises(OracleFailure):
            oracle_feasibility_cyclic(problem, tol=1e-6, max_sweeps=50)


class SmallLpTest(SimpleTestCase):
    """Vertex enumeration"""

    def test_optimal(self):
        """min −z₁ − z₂ s.t. z₁ + 2z₂ ≤ 4, 3z₁ + z₂ ≤ 6"""
        result = oracle_small_lp([-1.0, -1.0], [[1.0, 2.0], [3.0, 1.0]], [4.0, 6.0])
        self.assertEqual(result.status, 'optimal')
        self.assertAlmostEqual(result.value, -2.8)
        np.testing.assert_allclose(result.point, [1.6, 1.2])

    def test_infeasible(self):
        """z ≥ 0 with z ≤ −1"""
        self.assertEqual(oracle_small_lp([1.0], [[1.0]], [-1.0]).status, 'infeasible')

    def test_unbounded(self):
        """min −z₁ with only z₂ bounded"""
        result = oracle_small_lp([-1.0, 0.0], [[0.0, 1.0]], [1.0])
        self.assertEqual(result.status, 'unbounded')

    def test_size_limit(self):
        """Enumeration stops at six variables"""
        with self.assertRaises(ValueError):
            oracle_small_lp(np.ones(7), np.ones((1, 7)), [1.0])


class EllipsoidMinTest(SimpleTestCase):
    """Sampled worst case"""

    def test_sphere(self):
        """Unit circle around the origin against w = (1, 0)"""
        value = oracle_ellipsoid_min([1.0, 0.0], 0.0, [0.0, 0.0], 1, [1.0, 1.0])
        self.assertGreaterEqual(value, -1.0 - 1e-12)
        self.assertLess(value, -1.0 + 1e-6)

    def test_sample_floor(self):
        """At least 10⁴ samples"""
        with self.assertRaises(ValueError):
            oracle_ellipsoid_min([1.0], 0.0, [0.0], 1, [1.0], samples=100)


class FiniteDifferenceTest(SimpleTestCase):
    """Central differences"""

    def test_smooth_function(self):
        """Exact gradient passes, a wrong one does not"""
        def function(x):
            return float(x @ x) + 3.0 * x[0]

        point = np.array([0.5, -1.0])
        self.assertLess(finite_diff_subgradient_check(function, [4.0, -2.0], point), 1e-8)
        self.assertGreater(finite_diff_subgradient_check(function, [1.0, -2.0], point), 1.0)

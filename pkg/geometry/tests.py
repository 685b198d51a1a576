"""
Tests for simple-set projections, prox operators and the Polyak step.
"""
import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from geometry.prox import l1_subgradient, polyak_step, soc_eval_subgrad, soft_threshold
from geometry.sets import (
    Box,
    Halfspace,
    Hyperplane,
    NonnegativeOrthant,
    PartialNonnegative,
    WholeSpace,
    project,
    simple_set_from_name,
)
from oracles.reference import finite_diff_subgradient_check
from problems.exceptions import InconsistentOracleError

DIMENSION = 6


def _member_sampler(simple_set, rng):
    """Random points of the set."""
    if isinstance(simple_set, NonnegativeOrthant):
        return lambda: np.abs(rng.standard_normal(DIMENSION))
    if isinstance(simple_set, Box):
        return lambda: rng.uniform(simple_set.lower, simple_set.upper)
    if isinstance(simple_set, PartialNonnegative):
        def sample():
            point = rng.standard_normal(DIMENSION)
            point[simple_set.indices] = np.abs(point[simple_set.indices])
            return point
        return sample
    if isinstance(simple_set, (Halfspace, Hyperplane)):
        return lambda: simple_set.project(3.0 * rng.standard_normal(DIMENSION))
    return lambda: rng.standard_normal(DIMENSION)


class ProjectionTest(SimpleTestCase):
    """Closed-form projections"""

    def setUp(self):
        rng = np.random.default_rng(0)
        self.sets = [
            WholeSpace(),
            NonnegativeOrthant(),
            Box(-np.ones(DIMENSION), np.linspace(0.5, 2.0, DIMENSION)),
            Halfspace(rng.standard_normal(DIMENSION), 0.7),
            Hyperplane(rng.standard_normal(DIMENSION), -1.2),
            PartialNonnegative([0, 2, 5]),
        ]

    def test_projection_inequality(self):
        """(v − Π(v))ᵀ(y − Π(v)) ≤ 0 for 1000 random pairs per set"""
        rng = np.random.default_rng(1)
        for simple_set in self.sets:
            member = _member_sampler(simple_set, rng)
            with self.subTest(kind=simple_set.kind):
                worst = -np.inf
                for _ in range(1000):
                    v = 3.0 * rng.standard_normal(DIMENSION)
                    projected = project(simple_set, v)
                    worst = max(worst, float((v - projected) @ (member() - projected)))
                self.assertLessEqual(worst, 1e-12)

    def test_projection_is_member_and_idempotent(self):
        """Π(v) lies in the set and Π(Π(v)) = Π(v)"""
        rng = np.random.default_rng(2)
        for simple_set in self.sets:
            with self.subTest(kind=simple_set.kind):
                for _ in range(100):
                    projected = simple_set.project(5.0 * rng.standard_normal(DIMENSION))
                    self.assertTrue(simple_set.contains(projected, tol=1e-12))
                    np.testing.assert_allclose(simple_set.project(projected), projected, atol=1e-12)

    def test_box_examples(self):
        """Clipping onto a box, and a box with lower > upper is rejected"""
        box = Box([0.0, 0.0], [1.0, 2.0])
        np.testing.assert_array_equal(box.project([-1.0, 3.0]), [0.0, 2.0])
        self.assertTrue(box.contains(box.project([5.0, -5.0])))
        with self.assertRaises(ValidationError):
            Box([1.0], [0.0])

    def test_halfspace_example(self):
        """Projection onto x₁ + x₂ ≤ 1"""
        halfspace = Halfspace([1.0, 1.0], 1.0)
        np.testing.assert_allclose(halfspace.project([2.0, 2.0]), [0.5, 0.5])
        np.testing.assert_array_equal(halfspace.project([0.0, 0.0]), [0.0, 0.0])
        with self.assertRaises(ValidationError):
            Halfspace([0.0, 0.0], 1.0)

    def test_partial_nonnegative_leaves_free_coordinates(self):
        """Only the listed coordinates are clipped"""
        simple_set = PartialNonnegative([1])
        np.testing.assert_array_equal(simple_set.project([-1.0, -2.0, -3.0]), [-1.0, 0.0, -3.0])

    def test_names(self):
        """CLI names map to sets"""
        self.assertIsInstance(simple_set_from_name('free'), WholeSpace)
        self.assertIsInstance(simple_set_from_name('nonneg'), NonnegativeOrthant)
        with self.assertRaises(ValidationError):
            simple_set_from_name('ball')


class ProxTest(SimpleTestCase):
    """Soft thresholding"""

    def test_soft_threshold(self):
        """sign(x)·max(|x| − γ, 0)"""
        np.testing.assert_array_equal(soft_threshold([3.0, -0.5, 1.0, -2.5], 1.0), [2.0, 0.0, 0.0, -1.5])
        np.testing.assert_array_equal(soft_threshold([3.0], 0.5, weight=2.0), [2.0])

    def test_soft_threshold_is_prox(self):
        """The output minimizes γ‖z‖₁ + ½‖z − x‖² against random candidates"""
        rng = np.random.default_rng(3)
        x = rng.standard_normal(5)
        gamma = 0.4
        best = soft_threshold(x, gamma)

        def objective(z):
            return gamma * np.sum(np.abs(z)) + 0.5 * np.sum((z - x) ** 2)

        for _ in range(500):
            candidate = best + 0.1 * rng.standard_normal(5)
            self.assertGreaterEqual(objective(candidate), objective(best) - 1e-12)

    def test_invalid_gamma(self):
        """γ must be positive"""
        with self.assertRaises(ValidationError):
            soft_threshold([1.0], 0.0)

    def test_l1_subgradient(self):
        """sign with sign(0) = 0"""
        np.testing.assert_array_equal(l1_subgradient([-2.0, 0.0, 3.0]), [-1.0, 0.0, 1.0])


class PolyakStepTest(SimpleTestCase):
    """Relaxed Polyak feasibility step"""

    def test_exact_for_affine_constraints(self):
        """With β = 1 the post-step value of a violated affine constraint is zero"""
        rng = np.random.default_rng(4)
        worst = 0.0
        for _ in range(1000):
            normal = rng.standard_normal(10)
            v = rng.standard_normal(10)
            offset = float(normal @ v) - abs(rng.standard_normal()) - 1e-3
            violation = float(normal @ v) - offset
            z = polyak_step(v, violation, normal, 1.0)
            worst = max(worst, abs(float(normal @ z) - offset))
        self.assertLessEqual(worst, 1e-12)

    def test_example(self):
        """Point (2, 0) against x₁ ≤ 1"""
        np.testing.assert_allclose(polyak_step(np.array([2.0, 0.0]), 1.0, np.array([1.0, 0.0]), 1.0), [1.0, 0.0])
        np.testing.assert_allclose(polyak_step(np.array([2.0, 0.0]), 1.0, np.array([1.0, 0.0]), 1.5), [0.5, 0.0])

    def test_never_moves_away_from_feasible_points(self):
        """‖z − y‖ ≤ ‖v − y‖ for every y with h(y) ≤ 0, on halfspace and robust margin rows"""
        rng = np.random.default_rng(21)
        for beta in (0.5, 1.0, 1.5, 1.96):
            worst = -np.inf
            for _ in range(300):
                normal = rng.standard_normal(6)
                offset = float(rng.standard_normal())
                v = rng.standard_normal(6) * 3.0
                violation = max(float(normal @ v) - offset, 0.0)
                z = polyak_step(v, violation, normal, beta)
                y = Halfspace(normal, offset).project(rng.standard_normal(6) * 3.0)
                worst = max(worst, np.linalg.norm(z - y) - np.linalg.norm(v - y))

                z_i, y_i, q_diag = rng.standard_normal(4), float(rng.choice([-1.0, 1.0])), rng.uniform(0.25, 2.0, 4)
                w, d, u = rng.standard_normal(4), float(rng.standard_normal()), float(rng.standard_normal())
                value, parts = soc_eval_subgrad(w, d, u, z_i, y_i, q_diag)
                point = np.concatenate([w, [d, u]])
                gradient = np.concatenate([parts.w, [parts.d, parts.u]])
                z = polyak_step(point, max(value, 0.0), gradient, beta)
                w_y, d_y = rng.standard_normal(4), float(rng.standard_normal())
                shortfall, _ = soc_eval_subgrad(w_y, d_y, 0.0, z_i, y_i, q_diag)
                y = np.concatenate([w_y, [d_y, shortfall + 0.5 + rng.uniform(0.0, 2.0)]])
                worst = max(worst, np.linalg.norm(z - y) - np.linalg.norm(point - y))
            with self.subTest(beta=beta):
                self.assertLessEqual(worst, 1e-12)

    def test_satisfied_constraint_is_identity(self):
        """(h)₊ = 0 returns v itself"""
        v = np.array([0.5, 0.5])
        self.assertIs(polyak_step(v, 0.0, np.array([1.0, 0.0]), 1.96), v)

    def test_zero_gradient_with_violation(self):
        """A violated constraint with a zero subgradient is inconsistent"""
        with self.assertRaises(InconsistentOracleError):
            polyak_step(np.ones(2), 0.5, np.zeros(2), 1.0)

    def test_tiny_gradient_warns(self):
        """A numerically zero gradient skips the step with a warning"""
        v = np.ones(2)
        with self.assertLogs('geometry.prox', level='WARNING'):
            result = polyak_step(v, 1.0, np.array([1e-160, 0.0]), 1.0)
        self.assertIs(result, v)


class SocTest(SimpleTestCase):
    """Robust margin constraint"""

    def test_value_and_subgradient(self):
        """Value formula and finite-difference check of the w part"""
        rng = np.random.default_rng(5)
        w = rng.standard_normal(3)
        z = rng.standard_normal(3)
        q = np.array([0.5, 1.0, 2.0])
        value, parts = soc_eval_subgrad(w, 0.3, 0.2, z, -1.0, q)
        radius = np.sqrt(np.sum(w * w / q))
        self.assertAlmostEqual(value, radius + 1.0 - 0.2 + (w @ z + 0.3))
        self.assertEqual(parts.d, 1.0)
        self.assertEqual(parts.u, -1.0)

        def as_function(point):
            return soc_eval_subgrad(point, 0.3, 0.2, z, -1.0, q)[0]

        self.assertLess(finite_diff_subgradient_check(as_function, parts.w, w), 1e-6)

    def test_zero_weight(self):
        """At w = 0 the norm term contributes nothing"""
        z = np.array([1.0, 2.0])
        value, parts = soc_eval_subgrad(np.zeros(2), 0.0, 0.0, z, 1.0, np.ones(2))
        self.assertEqual(value, 1.0)
        np.testing.assert_array_equal(parts.w, -z)

    def test_nonpositive_shape(self):
        """Shape diagonals must be strictly positive"""
        with self.assertRaises(ValidationError):
            soc_eval_subgrad(np.ones(2), 0.0, 0.0, np.ones(2), 1.0, np.array([1.0, 0.0]))

"""
Tests for sampling, problem oracles and the least-squares constants.
"""
import numpy as np
import scipy.sparse as sp
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase
from scipy.stats import chisquare

from geometry.sets import Box, Halfspace
from oracles.reference import finite_diff_subgradient_check
from problems.core import (
    AffineConstraints,
    AssumptionConstants,
    CompositeProblem,
    FunctionalConstraints,
    FunctionalObjective,
    LeastSquaresObjective,
    SetDistanceConstraints,
    ZeroObjective,
    estimate_ls_constants,
    sample_constraint,
    sample_objective,
)
from problems.exceptions import IterateDivergedError
from problems.linalg import DENSE_SVD_MAX_ROWS, as_row_block, extreme_singular_values, spectral_norm
from problems.sampling import CategoricalDistribution, RandomStream


class RandomStreamTest(SimpleTestCase):
    """Seeded streams"""

    def test_same_seed_same_sequence(self):
        """Two streams with one seed draw the same indices"""
        distribution = CategoricalDistribution([1, 2, 3, 4])
        first, second = RandomStream(42), RandomStream(42)
        self.assertEqual(
            [first.draw(distribution) for _ in range(200)],
            [second.draw(distribution) for _ in range(200)],
        )

    def test_spawned_stream_is_independent(self):
        """A spawned stream does not replay its parent"""
        parent = RandomStream(3)
        child = parent.spawn(1)
        self.assertNotEqual(
            list(parent.generator.random(5)),
            list(child.generator.random(5)),
        )
        self.assertEqual(child.spawn_key, (1,))

    def test_rejects_negative_seed(self):
        """Seeds must be 64-bit unsigned integers"""
        with self.assertRaises(ValidationError):
            RandomStream(-1)
        with self.assertRaises(ValidationError):
            RandomStream(2 ** 64)


class CategoricalDistributionTest(SimpleTestCase):
    """Finite index distributions"""

    def test_empirical_frequencies_match_weights(self):
        """Chi-square goodness of fit on 20000 draws"""
        weights = np.array([0.1, 0.2, 0.3, 0.4])
        distribution = CategoricalDistribution(weights)
        generator = RandomStream(11).generator
        draws = [distribution.sample(generator) for _ in range(20_000)]
        observed = np.bincount(draws, minlength=4)
        result = chisquare(observed, weights * len(draws))
        self.assertGreater(result.pvalue, 1e-3)

    def test_zero_weight_never_sampled(self):
        """An index with zero weight is never returned, including the last one"""
        distribution = CategoricalDistribution([0.0, 1.0, 0.0, 2.0, 0.0])
        generator = RandomStream(5).generator
        draws = {distribution.sample(generator) for _ in range(5000)}
        self.assertEqual(draws, {1, 3})

    def test_invalid_weights(self):
        """Empty, negative and all-zero weights are configuration errors"""
        for weights in ([], [1.0, -0.5], [0.0, 0.0], [np.nan, 1.0]):
            with self.subTest(weights=weights):
                with self.assertRaises(ValidationError):
                    CategoricalDistribution(weights)

    def test_uniform(self):
        """uniform(n) assigns 1/n to every index"""
        distribution = CategoricalDistribution.uniform(4)
        np.testing.assert_allclose(distribution.probabilities, np.full(4, 0.25))
        self.assertEqual(len(distribution), 4)
        with self.assertRaises(ValidationError):
            CategoricalDistribution.uniform(0)


class AssumptionConstantsTest(SimpleTestCase):
    """Constant validation"""

    def test_defaults(self):
        """B is optional and unset by default"""
        constants = AssumptionConstants()
        self.assertIsNone(constants.B)
        self.assertEqual(constants.B_h, 1.0)

    def test_invalid_values(self):
        """Negative constants and a too-small regularity constant are rejected"""
        for kwargs in ({'L': -1}, {'B': -0.1}, {'mu': -2}, {'B_h': 0}, {'c': 0.5, 'B_h': 1.0}):
            with self.subTest(kwargs=kwargs):
                with self.assertRaises(ValidationError):
                    AssumptionConstants(**kwargs)

    def test_regularity_constant_accepted(self):
        """c·B_h² > 1 is accepted"""
        self.assertEqual(AssumptionConstants(c=2.0, B_h=1.0).c, 2.0)


class ObjectiveOracleTest(SimpleTestCase):
    """Objective oracles"""

    def setUp(self):
        rng = np.random.default_rng(0)
        self.A = rng.standard_normal((6, 4))
        self.b = rng.standard_normal(6)
        self.blocks = [self.A[0:2], self.A[2:4], self.A[4:6]]
        self.rhs = [self.b[0:2], self.b[2:4], self.b[4:6]]

    def test_least_squares_gradient(self):
        """The block gradient is A_ζᵀ(A_ζx − b_ζ) and matches finite differences"""
        objective = LeastSquaresObjective(self.blocks, self.rhs)
        x = np.array([0.3, -1.0, 2.0, 0.5])
        for index in range(3):
            with self.subTest(block=index):
                gradient = objective.subgradient(x, index)
                expected = self.blocks[index].T @ (self.blocks[index] @ x - self.rhs[index])
                np.testing.assert_allclose(gradient, expected)
                deviation = finite_diff_subgradient_check(
                    lambda point: objective.value(point, index), gradient, x
                )
                self.assertLess(deviation, 1e-6)

    def test_expected_value_full_and_sampled(self):
        """Exact expectation weights components; a fixed sample takes the plain mean"""
        objective = LeastSquaresObjective(self.blocks, self.rhs, CategoricalDistribution([1, 1, 2]))
        x = np.zeros(4)
        values = [objective.value(x, index) for index in range(3)]
        self.assertAlmostEqual(objective.expected_value(x), 0.25 * values[0] + 0.25 * values[1] + 0.5 * values[2])
        self.assertAlmostEqual(objective.expected_value(x, [0, 2]), 0.5 * (values[0] + values[2]))

    def test_functional_objective_without_value(self):
        """Objectives without a value report None"""
        objective = FunctionalObjective(CategoricalDistribution.uniform(2), lambda x, i: np.ones_like(x))
        self.assertIsNone(objective.expected_value(np.zeros(3)))
        np.testing.assert_array_equal(objective.prox(np.ones(3), 0.5, 0), np.ones(3))

    def test_zero_objective(self):
        """Pure feasibility has a zero gradient and zero value"""
        objective = ZeroObjective(3)
        np.testing.assert_array_equal(objective.subgradient(np.ones(3), 0), np.zeros(3))
        self.assertEqual(objective.expected_value(np.ones(3)), 0.0)


class ConstraintOracleTest(SimpleTestCase):
    """Constraint oracles"""

    def test_affine_violations_match_scalar_evaluation(self):
        """Vectorized violations equal the per-row positive parts, dense and sparse"""
        rng = np.random.default_rng(1)
        C = rng.standard_normal((20, 5))
        d = rng.standard_normal(20)
        x = rng.standard_normal(5)
        expected = np.maximum(C @ x - d, 0.0)
        for rows in (C, sp.csr_matrix(C)):
            oracle = AffineConstraints(rows, d)
            with self.subTest(sparse=sp.issparse(rows)):
                np.testing.assert_allclose(oracle.violations(x, np.arange(20)), expected)
                value, gradient = oracle.evaluate(x, 7)
                self.assertAlmostEqual(value, C[7] @ x - d[7])
                np.testing.assert_allclose(gradient, C[7])
                self.assertAlmostEqual(oracle.bound, np.linalg.norm(C, axis=1).max())

    def test_subgradients_respect_declared_bound(self):
        """Over 10³ random queries every returned subgradient has norm ≤ B_h"""
        rng = np.random.default_rng(18)
        C = rng.standard_normal((25, 6)) * rng.uniform(0.1, 3.0, (25, 1))
        oracles = [
            AffineConstraints(C, rng.standard_normal(25)),
            AffineConstraints(sp.csr_matrix(C * (rng.random(C.shape) < 0.4)), np.zeros(25)),
            SetDistanceConstraints([Box(-np.ones(6), np.ones(6)), Halfspace(rng.standard_normal(6), 0.5)]),
        ]
        for oracle in oracles:
            worst = 0.0
            for _ in range(1000):
                x = 10.0 * rng.standard_normal(6)
                _, gradient = oracle.evaluate(x, int(rng.integers(oracle.size)))
                worst = max(worst, float(np.linalg.norm(gradient)))
            with self.subTest(oracle=type(oracle).__name__):
                self.assertLessEqual(worst, oracle.bound * (1.0 + 1e-12))

    def test_affine_shape_mismatch(self):
        """Rows and offsets must agree"""
        with self.assertRaises(ValidationError):
            AffineConstraints(np.eye(3), np.zeros(2))

    def test_set_distance(self):
        """Distance to a box with a unit subgradient outside and zero inside"""
        oracle = SetDistanceConstraints([Box(np.zeros(2), np.ones(2)), Halfspace([1.0, 1.0], 1.0)])
        value, gradient = oracle.evaluate(np.array([3.0, 0.5]), 0)
        self.assertAlmostEqual(value, 2.0)
        np.testing.assert_allclose(gradient, [1.0, 0.0])
        value, gradient = oracle.evaluate(np.array([0.2, 0.2]), 1)
        self.assertEqual(value, 0.0)
        np.testing.assert_array_equal(gradient, np.zeros(2))
        self.assertEqual(oracle.bound, 1.0)


class CompositeProblemTest(SimpleTestCase):
    """Problem bundles and sampling"""

    def test_invalid_dimension(self):
        """Dimension must be positive"""
        with self.assertRaises(ValidationError):
            CompositeProblem(dimension=0, objective=ZeroObjective(1))

    def test_epoch_accounting(self):
        """One epoch is |Ω₁| + |Ω₂| indices, two per iteration with constraints"""
        problem = CompositeProblem(
            dimension=3,
            objective=LeastSquaresObjective([np.eye(3)[i] for i in range(3)], [[0.0]] * 3),
            constraints=AffineConstraints(np.ones((5, 3)), np.zeros(5)),
        )
        self.assertEqual(problem.samples_per_epoch, 8)
        self.assertEqual(problem.samples_per_iteration, 2)

    def test_unconstrained_sampling_consumes_one_draw(self):
        """Without constraints only the objective index is drawn"""
        problem = CompositeProblem(dimension=2, objective=ZeroObjective(2))
        stream, reference = RandomStream(9), RandomStream(9)
        sample_objective(problem, stream)
        self.assertIsNone(sample_constraint(problem, stream))
        reference.generator.random()
        self.assertEqual(stream.generator.random(), reference.generator.random())

    def test_objective_and_constraint_draws_are_independent(self):
        """Chi-square on the joint (ζ, ξ) table of 10⁵ iterations against the product of the weights"""
        objective_weights = np.array([0.2, 0.3, 0.5])
        constraint_weights = np.array([0.1, 0.2, 0.3, 0.4])
        problem = CompositeProblem(
            dimension=2,
            objective=FunctionalObjective(CategoricalDistribution(objective_weights), lambda x, i: x),
            constraints=FunctionalConstraints(
                CategoricalDistribution(constraint_weights), lambda x, i: (0.0, np.ones(2)), bound=1.0,
            ),
        )
        stream = RandomStream(17)
        table = np.zeros((3, 4))
        draws = 100_000
        for _ in range(draws):
            objective_index = sample_objective(problem, stream).index
            table[objective_index, sample_constraint(problem, stream).index] += 1
        expected = draws * np.outer(objective_weights, constraint_weights)
        result = chisquare(table.ravel(), expected.ravel())
        self.assertGreater(result.pvalue, 1e-3)


class LeastSquaresConstantsTest(SimpleTestCase):
    """L and B_h estimates"""

    def test_single_rows(self):
        """L = 2·max‖a_i‖² for single rows and B = 0"""
        A = np.array([[3.0, 4.0], [1.0, 0.0]])
        constants = estimate_ls_constants([A[0], A[1]], rows_C=np.array([[0.0, 2.0]]))
        self.assertAlmostEqual(constants.L, 50.0)
        self.assertEqual(constants.B, 0.0)
        self.assertEqual(constants.mu, 0.0)
        self.assertAlmostEqual(constants.B_h, 2.0)

    def test_zero_blocks_warn(self):
        """All-zero blocks log a warning and give L = 0"""
        with self.assertLogs('problems.core', level='WARNING'):
            constants = estimate_ls_constants([np.zeros((2, 3))])
        self.assertEqual(constants.L, 0.0)

    def test_power_iteration_matches_svd(self):
        """Tall blocks use power iteration that agrees with the dense SVD"""
        block = np.random.default_rng(4).standard_normal((200, 30))
        expected = np.linalg.svd(block, compute_uv=False)[0]
        self.assertAlmostEqual(spectral_norm(block), expected, places=4)
        self.assertAlmostEqual(spectral_norm(sp.csr_matrix(block)), expected, places=4)

    def test_extreme_singular_values_on_rank_deficient_tall_block(self):
        """σ_max and the smallest nonzero σ agree with the SVD; a zero block gives (0, 0)"""
        rng = np.random.default_rng(19)
        block = rng.standard_normal((200, 20)) @ rng.standard_normal((20, 30))
        self.assertGreater(block.shape[0], DENSE_SVD_MAX_ROWS)
        values = np.linalg.svd(block, compute_uv=False)
        for candidate in (block, sp.csr_matrix(block)):
            with self.subTest(sparse=sp.issparse(candidate)):
                largest, smallest = extreme_singular_values(candidate)
                self.assertAlmostEqual(largest / values[0], 1.0, places=6)
                self.assertAlmostEqual(smallest / values[19], 1.0, places=6)
        self.assertEqual(extreme_singular_values(np.zeros((100, 5))), (0.0, 0.0))
        self.assertEqual(extreme_singular_values(np.zeros((3, 5))), (0.0, 0.0))

    def test_as_row_block(self):
        """1-D input becomes one row"""
        self.assertEqual(as_row_block(np.ones(3)).shape, (1, 3))


class ExceptionTest(SimpleTestCase):
    """Numeric failure types"""

    def test_diverged_carries_iteration(self):
        """The iteration index is kept on the exception"""
        error = IterateDivergedError(17)
        self.assertEqual(error.iteration, 17)
        self.assertIn('17', str(error))

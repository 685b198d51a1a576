"""
Tests for datasets, uncertainty models and the problem builders.
"""
import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from builders.datasets import (
    CovarianceMode,
    EllipsoidModel,
    LabeledDataset,
    covariance_from_data,
    train_test_split,
)
from builders.least_squares import (
    SvmLpEncoding,
    build_constrained_ls,
    build_lp_feasibility,
    build_sparse_svm_lp,
    split_lp_solution,
)
from builders.robust_svm import (
    ClassificationRule,
    RobustSvmLayout,
    build_robust_svm,
    classify,
    count_errors,
    worst_case_point,
)
from builders.synthetic import planted_linear_system, random_bounded_lp, separable_toy
from geometry.prox import soc_eval_subgrad
from oracles.reference import finite_diff_subgradient_check, oracle_ellipsoid_min, oracle_small_lp
from solvers.averaging import AveragingMode
from solvers.linear import LsConfig, ssp_ls_run
from solvers.ssp import SolverConfig, ssp_run
from solvers.stepsizes import PolynomialDecay


def small_dataset():
    features = np.array([
        [1.0, 0.0, 2.0],
        [2.0, 1.0, 0.0],
        [0.0, 3.0, 1.0],
        [-1.0, 0.0, -2.0],
        [-2.0, -1.0, 0.0],
        [0.0, -2.0, -1.0],
    ])
    return LabeledDataset.from_dense(features, [1, 1, 1, -1, -1, -1])


class LabeledDatasetTest(SimpleTestCase):
    """Dataset container and splitting"""

    def test_validation(self):
        """Labels must be ±1 and match the row count"""
        with self.assertRaises(ValidationError):
            LabeledDataset.from_dense(np.eye(2), [1, 0])
        with self.assertRaises(ValidationError):
            LabeledDataset.from_dense(np.eye(2), [1, -1, 1])

    def test_subset_and_class_rows(self):
        """Row selection keeps features and labels aligned"""
        data = small_dataset()
        subset = data.subset([0, 4])
        np.testing.assert_array_equal(subset.labels, [1.0, -1.0])
        np.testing.assert_array_equal(subset.dense_features()[1], [-2.0, -1.0, 0.0])
        self.assertEqual(data.class_rows(-1).shape, (3, 3))

    def test_split_is_seeded(self):
        """Same seed, same split; sizes follow the fraction"""
        data = small_dataset()
        train, test = train_test_split(data, 0.5, seed=3)
        again, _ = train_test_split(data, 0.5, seed=3)
        self.assertEqual(train.num_examples, 3)
        self.assertEqual(test.num_examples, 3)
        np.testing.assert_array_equal(train.dense_features(), again.dense_features())
        full, empty = train_test_split(data, 1.0)
        self.assertEqual((full.num_examples, empty.num_examples), (6, 0))
        with self.assertRaises(ValidationError):
            train_test_split(data, 0.0)


class EllipsoidModelTest(SimpleTestCase):
    """Diagonal covariance model"""

    def test_dependent_covariances(self):
        """Per-class per-feature sample variances"""
        data = small_dataset()
        model = covariance_from_data(data, CovarianceMode.DEPENDENT, rho=0.5)
        np.testing.assert_allclose(model.positive, np.var(data.class_rows(1).toarray(), axis=0, ddof=1))
        np.testing.assert_allclose(model.negative, np.var(data.class_rows(-1).toarray(), axis=0, ddof=1))

    def test_independent_covariance_is_pooled(self):
        """One value on every feature for both classes"""
        model = covariance_from_data(small_dataset(), 'independent', rho=0.5)
        self.assertEqual(len(set(model.positive.tolist())), 1)
        np.testing.assert_array_equal(model.positive, model.negative)

    def test_radius_and_shape(self):
        """‖Q^{-1/2}w‖² = ρ·Σ_j Σ_jj w_j² and Q = (ρΣ)⁻¹"""
        model = EllipsoidModel('dependent', [1.0, 4.0], [2.0, 2.0], 0.5)
        self.assertAlmostEqual(model.radius_sq([1.0, 1.0], 1), 2.5)
        self.assertAlmostEqual(model.radius_sq([1.0, 1.0], -1), 2.0)
        np.testing.assert_allclose(model.shape(1), [2.0, 0.5])
        w = np.array([0.3, -0.7])
        self.assertAlmostEqual(model.radius_sq(w, 1), float(w @ (w / model.shape(1))))

    def test_invalid_models(self):
        """ρ outside [0, 1], negative diagonals and mismatched lengths"""
        for args in (([1.0], [1.0], 1.5), ([-1.0], [1.0], 0.1), ([1.0], [1.0, 1.0], 0.1)):
            with self.subTest(args=args):
                with self.assertRaises(ValidationError):
                    EllipsoidModel('dependent', *args)

    def test_degenerate_model_warns(self):
        """A constant feature with ρ > 0 is logged"""
        features = np.array([[1.0, 5.0], [2.0, 5.0], [-1.0, 5.0], [-3.0, 5.0]])
        data = LabeledDataset.from_dense(features, [1, 1, -1, -1])
        with self.assertLogs('builders.datasets', level='WARNING'):
            model = covariance_from_data(data, rho=0.3)
        self.assertTrue(model.degenerate)
        with self.assertRaises(ValidationError):
            model.shape(1)
        self.assertFalse(EllipsoidModel('dependent', [0.0], [0.0], 0.0).degenerate)

    def test_dependent_needs_both_classes(self):
        """A single class cannot give class-dependent variances"""
        data = LabeledDataset.from_dense(np.eye(3), [1, 1, 1])
        with self.assertRaises(ValidationError):
            covariance_from_data(data, 'dependent')


class ConstrainedLsBuilderTest(SimpleTestCase):
    """Constrained least squares"""

    def test_constants_and_pairs(self):
        """L = 2·max σ_max² over blocks, and C, d come together"""
        A = np.array([[3.0, 4.0], [1.0, 0.0]])
        problem = build_constrained_ls(A, [1.0, 2.0])
        self.assertAlmostEqual(problem.constants.L, 50.0)
        self.assertEqual(problem.constants.B, 0.0)
        with self.assertRaises(ValidationError):
            build_constrained_ls(A, [1.0, 2.0], C=np.eye(2))


class LpFeasibilityTest(SimpleTestCase):
    """LP primal-dual system"""

    def test_layout(self):
        """One equality row [c, d] and the stacked primal and dual rows"""
        c = np.array([1.0, -2.0])
        C_lp = np.array([[1.0, 1.0], [2.0, 0.5], [0.0, 1.0]])
        d_lp = np.array([4.0, 3.0, 2.0])
        problem = build_lp_feasibility(c, C_lp, d_lp)
        self.assertEqual(problem.dimension, 5)
        np.testing.assert_array_equal(problem.A, [[1.0, -2.0, 4.0, 3.0, 2.0]])
        np.testing.assert_array_equal(problem.b, [0.0])
        dense = problem.C.toarray()
        np.testing.assert_array_equal(dense[:3, :2], C_lp)
        np.testing.assert_array_equal(dense[3:, 2:], -C_lp.T)
        np.testing.assert_array_equal(dense[:3, 2:], 0.0)
        np.testing.assert_array_equal(problem.d, [4.0, 3.0, 2.0, 1.0, -2.0])
        self.assertEqual(problem.simple_set.kind, 'nonnegative-orthant')

    def test_optimal_pair_is_feasible(self):
        """min −z s.t. z ≤ 1 has z* = ν* = 1"""
        problem = build_lp_feasibility([-1.0], [[1.0]], [1.0])
        point = np.array([1.0, 1.0])
        self.assertEqual(problem.eq_residual(point), 0.0)
        self.assertEqual(problem.ineq_residual(point), 0.0)
        z, nu = split_lp_solution(point, 1)
        np.testing.assert_array_equal(z, [1.0])
        np.testing.assert_array_equal(nu, [1.0])

    def test_shape_mismatch(self):
        """c and d must match C"""
        with self.assertRaises(ValidationError):
            build_lp_feasibility([1.0], np.eye(2), [1.0, 1.0])
        with self.assertRaises(ValidationError):
            build_lp_feasibility([1.0, 1.0], np.eye(2), [1.0])

    def test_ssp_ls_matches_vertex_enumeration(self):
        """20 random bounded LPs: |cᵀz − opt| ≤ 1e-2 once residuals reach 1e-3"""
        for seed in range(20):
            c, C_lp, d_lp = random_bounded_lp(3, 3, seed=seed)
            reference = oracle_small_lp(c, C_lp, d_lp)
            self.assertEqual(reference.status, 'optimal')
            problem = build_lp_feasibility(c, C_lp, d_lp)
            report, _ = ssp_ls_run(
                problem, LsConfig(delta=1.0, beta=1.0, tolerance=1e-3, max_epochs=100_000, seed=seed)
            )
            z, _ = split_lp_solution(report.point, 3)
            with self.subTest(seed=seed):
                self.assertTrue(report.converged)
                self.assertLessEqual(report.extras['eq_residual'], 1e-3)
                self.assertLessEqual(report.extras['ineq_residual'], 1e-3)
                self.assertLessEqual(abs(float(c @ z) - reference.value), 1e-2)


class SparseSvmLpTest(SimpleTestCase):
    """Sparse SVM encoded as an LP"""

    def test_encoding(self):
        """Positive and negative parts split and recombine"""
        encoding = SvmLpEncoding(num_features=3, num_examples=2)
        self.assertEqual(encoding.num_variables, 10)
        z = encoding.encode([1.5, -2.0, 0.0], -0.5, [0.0, 0.3])
        np.testing.assert_array_equal(z[:6], [1.5, 0.0, 0.0, 0.0, 2.0, 0.0])
        self.assertTrue(np.all(z >= 0))
        w, d, u = encoding.decode(np.concatenate([z, np.ones(4)]))
        np.testing.assert_array_equal(w, [1.5, -2.0, 0.0])
        self.assertEqual(d, -0.5)
        np.testing.assert_array_equal(u, [0.0, 0.3])

    def test_margin_rows(self):
        """The primal rows of the system are the SVM margin constraints"""
        data = small_dataset()
        problem, encoding = build_sparse_svm_lp(data, lam=2.0)
        N = data.num_examples
        self.assertEqual(problem.dimension, encoding.num_variables + N)
        cost = problem.A.ravel()[:encoding.num_variables]
        np.testing.assert_array_equal(cost[:6], 1.0)
        np.testing.assert_array_equal(cost[6:8], 0.0)
        np.testing.assert_array_equal(cost[8:], 2.0)

        rng = np.random.default_rng(0)
        w, d = rng.standard_normal(3), 0.2
        margins = data.labels * (data.dense_features() @ w + d)
        u = np.maximum(1.0 - margins, 0.0)
        z = encoding.encode(w, d, u)
        primal = problem.C[:N, :encoding.num_variables] @ z
        np.testing.assert_allclose(primal, -margins - u)
        self.assertTrue(np.all(primal <= problem.d[:N] + 1e-12))

    def test_invalid(self):
        """λ must be positive"""
        with self.assertRaises(ValidationError):
            build_sparse_svm_lp(small_dataset(), lam=0.0)


class RobustSvmBuilderTest(SimpleTestCase):
    """Robust SVM composite problem"""

    def setUp(self):
        self.data = small_dataset()
        self.model = EllipsoidModel('dependent', [0.5, 1.0, 2.0], [1.0, 1.0, 0.25], 0.4)
        self.problem = build_robust_svm(self.data, 1.5, self.model)
        self.layout = self.problem.metadata['layout']

    def test_layout(self):
        """x = (w, d, u) with u ≥ 0 only"""
        layout = RobustSvmLayout(3, 6)
        self.assertEqual(layout.dimension, 10)
        w, d, u = layout.split(layout.join([1.0, 2.0, 3.0], -1.0, np.arange(6)))
        np.testing.assert_array_equal(w, [1.0, 2.0, 3.0])
        self.assertEqual(d, -1.0)
        np.testing.assert_array_equal(u, np.arange(6))
        np.testing.assert_array_equal(self.problem.simple_set.indices, np.arange(4, 10))

    def test_objective(self):
        """λΣu + ‖w‖₁ with the prox acting on w only"""
        x = self.layout.join([1.0, -0.2, 0.0], 3.0, np.full(6, 0.5))
        objective = self.problem.objective
        self.assertAlmostEqual(objective.value(x, 0), 1.5 * 3.0 + 1.2)
        gradient = objective.subgradient(x, 0)
        np.testing.assert_array_equal(gradient[:4], 0.0)
        np.testing.assert_array_equal(gradient[4:], 1.5)
        proxed = objective.prox(x, 0.5, 0)
        np.testing.assert_allclose(proxed[:3], [0.5, 0.0, 0.0])
        np.testing.assert_array_equal(proxed[3:], x[3:])

    def test_constraint_rows(self):
        """Margin rows, cone rows and their vectorized values agree"""
        constraints = self.problem.constraints
        self.assertEqual(constraints.size, 12)
        rng = np.random.default_rng(1)
        x = rng.standard_normal(self.layout.dimension)
        values = constraints.all_values(x)
        w, d, u = self.layout.split(x)
        for index in range(12):
            example = index % 6
            value, gradient = constraints.evaluate(x, index)
            with self.subTest(index=index):
                self.assertAlmostEqual(value, values[index])
                if index >= 6:
                    y_i = self.data.labels[example]
                    z_i = self.data.dense_features()[example]
                    expected, _ = soc_eval_subgrad(w, d, u[example], z_i, y_i, self.model.shape(y_i))
                    self.assertAlmostEqual(value, expected)

                    def as_function(point, index=index):
                        return constraints.evaluate(point, index)[0]

                    self.assertLess(finite_diff_subgradient_check(as_function, gradient, x), 1e-6)
        np.testing.assert_allclose(constraints.violations(x, [0, 7]), np.maximum(values[[0, 7]], 0.0))

    def test_subgradients_respect_declared_bound(self):
        """Over 10³ random queries, margin and cone subgradients stay within B_h"""
        constraints = self.problem.constraints
        self.assertEqual(self.problem.constants.B_h, constraints.bound)
        rng = np.random.default_rng(22)
        worst = 0.0
        for query in range(1000):
            x = 5.0 * rng.standard_normal(self.layout.dimension)
            if query % 10 == 0:
                x[:3] = 0.0
            _, gradient = constraints.evaluate(x, int(rng.integers(constraints.size)))
            worst = max(worst, float(np.linalg.norm(gradient)))
        self.assertLessEqual(worst, constraints.bound * (1.0 + 1e-12))

    def test_nominal_model_has_margin_rows_only(self):
        """ρ = 0 emits N linear constraints"""
        nominal = EllipsoidModel('dependent', [0.0, 0.0, 0.0], [0.0, 0.0, 0.0], 0.0)
        problem = build_robust_svm(self.data, 1.0, nominal)
        self.assertEqual(problem.constraints.size, 6)
        self.assertEqual(problem.name, 'nominal-svm')

    def test_invalid(self):
        """Degenerate covariances, wrong dimensions and λ ≤ 0"""
        with self.assertRaises(ValidationError):
            build_robust_svm(self.data, 1.0, EllipsoidModel('dependent', [0.0, 1.0, 1.0], [1.0, 1.0, 1.0], 0.3))
        with self.assertRaises(ValidationError):
            build_robust_svm(self.data, 1.0, EllipsoidModel('dependent', [1.0], [1.0], 0.3))
        with self.assertRaises(ValidationError):
            build_robust_svm(self.data, 0.0, self.model)


class WorstCaseTest(SimpleTestCase):
    """Worst-case points and classification rules"""

    def test_example(self):
        """Unit ball around (1, 0) against w = (1, 0)"""
        result = worst_case_point([1.0, 0.0], 0.0, [1.0, 0.0], 1, [1.0, 1.0])
        np.testing.assert_allclose(result.point, [0.0, 0.0])
        self.assertAlmostEqual(result.value, 0.0)
        self.assertFalse(result.degenerate)

    def test_zero_weight_is_degenerate(self):
        """w = 0 returns z_i with the flag"""
        result = worst_case_point([0.0, 0.0], 0.5, [3.0, 4.0], -1, [1.0, 1.0])
        np.testing.assert_array_equal(result.point, [3.0, 4.0])
        self.assertEqual(result.value, -0.5)
        self.assertTrue(result.degenerate)

    def test_matches_sampled_minimum(self):
        """100 random ellipsoids in 2 and 3 dimensions against 10⁵ boundary samples"""
        rng = np.random.default_rng(2)
        for instance in range(100):
            size = 2 + instance % 2
            w = rng.standard_normal(size)
            d = float(rng.standard_normal())
            z_i = rng.standard_normal(size)
            y_i = 1 if rng.random() < 0.5 else -1
            q_diag = rng.uniform(0.5, 2.0, size)
            result = worst_case_point(w, d, z_i, y_i, q_diag)
            sampled = oracle_ellipsoid_min(w, d, z_i, y_i, q_diag, seed=instance)
            with self.subTest(instance=instance):
                self.assertLessEqual(abs(result.value - sampled), 1e-3 * max(1.0, abs(result.value)))
                self.assertAlmostEqual(float((result.point - z_i) @ (q_diag * (result.point - z_i))), 1.0)
                # the cone constraint at u = 0 is 1 minus the worst-case margin
                soc_value, _ = soc_eval_subgrad(w, d, 0.0, z_i, y_i, q_diag)
                self.assertLessEqual(abs((1.0 - soc_value) - result.value), 1e-12)

    def test_classify(self):
        """Sign rule with ties to +1, and the worst-case flag"""
        self.assertEqual(classify('ordinary', [1.0, 0.0], 0.0, [2.0, 5.0]).label, 1)
        tie = classify(ClassificationRule.ORDINARY, [1.0, 0.0], -2.0, [2.0, 5.0])
        self.assertEqual(tie.label, 1)
        self.assertTrue(tie.on_boundary)
        self.assertEqual(classify('ordinary', [1.0, 0.0], 0.0, [-0.1, 0.0]).label, -1)

        # score 1, ‖Q^{-1/2}w‖² = 4
        flagged = classify('worst_case', [2.0, 0.0], -1.0, [1.0, 0.0], q_diag=[1.0, 1.0])
        self.assertTrue(flagged.worst_case_flag)
        unsquared = classify('worst_case', [2.0, 0.0], -1.0, [1.0, 0.0], q_diag=[1.0, 1.0], squared=False)
        self.assertTrue(unsquared.worst_case_flag)
        clear = classify('worst_case', [2.0, 0.0], 2.0, [1.0, 0.0], q_diag=[1.0, 1.0])
        self.assertFalse(clear.worst_case_flag)
        with self.assertRaises(ValidationError):
            classify('worst_case', [1.0], 0.0, [1.0])

    def test_count_errors(self):
        """Worst-case errors include every ordinary error"""
        data = LabeledDataset.from_dense([[2.0], [0.5], [-1.0], [0.2]], [1, 1, -1, -1])
        model = EllipsoidModel('dependent', [1.0], [1.0], 1.0)
        counts = count_errors(data, [1.0], 0.0, model)
        # scores 2, 0.5, −1, 0.2; threshold 1; only the last point is misclassified
        self.assertEqual(counts.ordinary, 1)
        self.assertEqual(counts.worst_case, 2)
        self.assertEqual(count_errors(data, [1.0], 0.0).worst_case, 1)
        self.assertEqual(count_errors(data, [1.0], 0.0, model, squared=False).worst_case, 2)


class SyntheticTest(SimpleTestCase):
    """Seeded generators"""

    def test_planted_system_is_consistent(self):
        """b = Ax† and Cx† ≤ d"""
        system = planted_linear_system(12, 7, 4, seed=1)
        np.testing.assert_allclose(system['A'] @ system['solution'], system['b'])
        self.assertTrue(np.all(system['C'] @ system['solution'] <= system['d']))
        with self.assertRaises(ValidationError):
            planted_linear_system(0, 0, 3)

    def test_bounded_lp(self):
        """z = 0 is feasible and the box rows are appended"""
        c, C, d = random_bounded_lp(4, 2, seed=5, upper=2.0)
        self.assertEqual(C.shape, (6, 4))
        np.testing.assert_array_equal(C[2:], np.eye(4))
        np.testing.assert_array_equal(d[2:], 2.0)
        self.assertTrue(np.all(d > 0))

    def test_separable_toy(self):
        """Both classes sit on their boundary lines and are separable by either axis"""
        data = separable_toy(6, seed=0)
        features = data.dense_features()
        positive = features[data.labels > 0]
        self.assertTrue(np.all(positive[:, 0] >= 2.0))
        self.assertTrue(np.all(positive[:, 1] >= 1.0))
        self.assertTrue(np.any(positive[:, 0] == 2.0))
        self.assertTrue(np.any(positive[:, 1] == 1.0))
        np.testing.assert_array_equal(features[data.labels < 0], -positive)
        with self.assertRaises(ValidationError):
            separable_toy(3)


class RobustVersusNominalTest(SimpleTestCase):
    """
    Variance 100 along x and 1/30 along y: the nominal classifier leans on x,
    whose ellipsoids cross the hyperplane; the robust one leans on y.
    """

    def solve(self, data, rho):
        model = EllipsoidModel('dependent', [100.0, 1.0 / 30.0], [100.0, 1.0 / 30.0], rho)
        problem = build_robust_svm(data, 1.0, model)
        config = SolverConfig(
            policy=PolynomialDecay(alpha0=0.45, gamma=0.5, L=0.0),
            beta=1.96,
            averaging=AveragingMode.CONVEX,
            max_iterations=50_000,
            log_every=1000,
        )
        report, _ = ssp_run(problem, config)
        w, d, _ = problem.metadata['layout'].split(report.point)
        return w, d

    def test_robust_classifier_avoids_worst_case_errors(self):
        """Same ordinary errors, strictly fewer worst-case errors"""
        data = separable_toy(6, seed=0)
        uncertainty = EllipsoidModel('dependent', [100.0, 1.0 / 30.0], [100.0, 1.0 / 30.0], 0.3)
        nominal_w, nominal_d = self.solve(data, 0.0)
        robust_w, robust_d = self.solve(data, 0.3)
        nominal = count_errors(data, nominal_w, nominal_d, uncertainty)
        robust = count_errors(data, robust_w, robust_d, uncertainty)
        self.assertEqual(nominal.ordinary, 0)
        self.assertEqual(robust.ordinary, 0)
        self.assertEqual(robust.worst_case, 0)
        self.assertGreater(nominal.worst_case, robust.worst_case)
        self.assertGreater(abs(nominal_w[0]), abs(robust_w[0]))

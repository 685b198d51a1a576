"""
Tests for the SSP iteration, its run loop and the convergence trace.
"""
import io

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from geometry.sets import Box, Halfspace, WholeSpace
from problems.core import (
    AffineConstraints,
    CompositeProblem,
    FunctionalConstraints,
    FunctionalObjective,
    LeastSquaresObjective,
    OptimumHint,
    sample_objective,
)
from problems.exceptions import InconsistentOracleError, IterateDivergedError
from problems.sampling import CategoricalDistribution, RandomStream
from solvers.averaging import AveragingMode
from solvers.reports import SSP_TRACE_COLUMNS, ConvergenceTrace, TerminationReason, format_value
from solvers.ssp import SolverConfig, SspState, gradient_mapping, ssp_run, ssp_step
from solvers.stepsizes import Constant, PolynomialDecay, SwitchingStronglyConvex


def quadratic_problem(simple_set=None, constraints=True):
    """f = ½‖x − a‖² for one point a = (2, 2) and the constraint x₁ ≤ 1."""
    target = np.array([2.0, 2.0])
    objective = LeastSquaresObjective([np.eye(2)], [target])
    return CompositeProblem(
        dimension=2,
        objective=objective,
        simple_set=simple_set or WholeSpace(),
        constraints=AffineConstraints(np.array([[1.0, 0.0]]), [1.0]) if constraints else None,
        optimum_hint=OptimumHint(value=0.5, point=np.array([1.0, 2.0])),
        name='quadratic',
    )


class SspStepTest(SimpleTestCase):
    """One iteration"""

    def test_hand_computed_step(self):
        """prox-gradient, Polyak and projection from x0 = 0"""
        problem = quadratic_problem()
        config = SolverConfig(policy=Constant(0.5, L=1.0), beta=1.0)
        state = SspState.initial(problem, config)
        ssp_step(state, problem, config.policy, config.beta, RandomStream(0))
        # v = 0 − 0.5·(0 − (2, 2)) = (1, 1); x₁ ≤ 1 holds, so z = v
        np.testing.assert_allclose(state.v, [1.0, 1.0])
        np.testing.assert_allclose(state.x, [1.0, 1.0])
        ssp_step(state, problem, config.policy, config.beta, RandomStream(0))
        # v = (1.5, 1.5), Polyak with β = 1 lands on x₁ = 1
        np.testing.assert_allclose(state.v, [1.5, 1.5])
        np.testing.assert_allclose(state.x, [1.0, 1.5])
        self.assertEqual(state.k, 2)
        self.assertEqual(state.alpha, 0.5)

    def test_iterates_stay_in_simple_set(self):
        """Every iterate satisfies the exact membership predicate of Y"""
        box = Box([-0.5, 0.0], [0.8, 1.5])
        problem = quadratic_problem(simple_set=box)
        config = SolverConfig(policy=PolynomialDecay(alpha0=0.9, L=1.0), beta=1.96)
        state = SspState.initial(problem, config)
        stream = RandomStream(1)
        for _ in range(200):
            ssp_step(state, problem, config.policy, config.beta, stream)
            self.assertTrue(box.contains(state.x))

    def test_nan_gradient_diverges(self):
        """A non-finite iterate raises with the iteration index"""
        objective = FunctionalObjective(
            CategoricalDistribution.uniform(1), lambda x, i: np.full_like(x, np.nan)
        )
        problem = CompositeProblem(dimension=2, objective=objective)
        config = SolverConfig(policy=Constant(0.1))
        with self.assertRaises(IterateDivergedError) as context:
            ssp_run(problem, config)
        self.assertEqual(context.exception.iteration, 0)

    def test_zero_gradient_violation_is_inconsistent(self):
        """A violated constraint with a zero subgradient aborts the run"""
        constraints = FunctionalConstraints(
            CategoricalDistribution.uniform(1), lambda x, i: (1.0, np.zeros_like(x)), bound=1.0
        )
        problem = CompositeProblem(
            dimension=2,
            objective=LeastSquaresObjective([np.eye(2)], [np.zeros(2)]),
            constraints=constraints,
        )
        with self.assertRaises(InconsistentOracleError):
            ssp_run(problem, SolverConfig(policy=Constant(0.1, L=1.0)))

    def test_matches_direct_transcription(self):
        """100 iterations on a 5-dim box-constrained problem agree with a plain numpy loop to 1e-12"""
        rng = np.random.default_rng(23)
        A, b = rng.standard_normal((8, 5)), rng.standard_normal(8)
        C, d = rng.standard_normal((4, 5)), rng.standard_normal(4) - 0.5
        lower, upper = -np.full(5, 2.0), np.full(5, 2.0)
        problem = CompositeProblem(
            dimension=5,
            objective=LeastSquaresObjective([row for row in A], [[value] for value in b]),
            simple_set=Box(lower, upper),
            constraints=AffineConstraints(C, d),
        )
        config = SolverConfig(policy=PolynomialDecay(alpha0=0.3, gamma=0.5), beta=1.5)
        state = SspState.initial(problem, config)
        stream = RandomStream(31)

        generator = np.random.default_rng(31)
        x = np.zeros(5)
        for k in range(100):
            alpha = 0.3 / (k + 1) ** 0.5
            i = int(np.floor(8 * generator.random()))
            j = int(np.floor(4 * generator.random()))
            v = x - alpha * A[i] * (A[i] @ x - b[i])
            violation = max(C[j] @ v - d[j], 0.0)
            z = v - 1.5 * violation / (C[j] @ C[j]) * C[j]
            x = np.clip(z, lower, upper)

            ssp_step(state, problem, config.policy, config.beta, stream)
            with self.subTest(iteration=k):
                self.assertEqual((state.objective_index, state.constraint_index), (i, j))
                np.testing.assert_allclose(state.x, x, rtol=0.0, atol=1e-12)

    def test_feasibility_step_never_moves_away_from_feasible_points(self):
        """‖z_k − y‖ ≤ ‖v_k − y‖ for a panel of points y satisfying the sampled constraint"""
        rng = np.random.default_rng(24)
        C, d = rng.standard_normal((10, 5)), rng.standard_normal(10)
        problem = CompositeProblem(
            dimension=5,
            objective=LeastSquaresObjective([rng.standard_normal((2, 5)) for _ in range(3)],
                                            [rng.standard_normal(2) for _ in range(3)]),
            constraints=AffineConstraints(C, d),
        )
        panel = 4.0 * rng.standard_normal((25, 5))
        for beta in (0.5, 1.0, 1.96):
            config = SolverConfig(policy=PolynomialDecay(alpha0=0.05, gamma=0.5), beta=beta)
            state = SspState.initial(problem, config)
            stream = RandomStream(25)
            worst = -np.inf
            for _ in range(500):
                ssp_step(state, problem, config.policy, config.beta, stream)
                row, offset = C[state.constraint_index], d[state.constraint_index]
                for point in panel:
                    y = Halfspace(row, offset).project(point)
                    worst = max(worst, np.linalg.norm(state.z - y) - np.linalg.norm(state.v - y))
            with self.subTest(beta=beta):
                self.assertLessEqual(worst, 1e-12)

    def test_averaging_weight_stays_between_stepsize_and_one(self):
        """α_k < α_k(2 − α_kL) < 1 on every iteration for admissible decaying stepsizes"""
        problem = quadratic_problem()
        for L, gamma, alpha0 in ((0.0, 0.5, 0.45), (1.0, 0.5, None), (1.0, 0.0, 0.95), (4.0, 0.75, 0.2)):
            policy = PolynomialDecay(alpha0=alpha0, gamma=gamma, L=L)
            config = SolverConfig(policy=policy, beta=1.0)
            state = SspState.initial(problem, config)
            stream = RandomStream(26)
            for _ in range(2000):
                k = state.k
                ssp_step(state, problem, policy, config.beta, stream)
                weight = policy.weight_factor(k)
                with self.subTest(L=L, gamma=gamma, k=k):
                    self.assertEqual(state.alpha, policy.alpha(k))
                    self.assertLess(state.alpha, weight)
                    self.assertLess(weight, 1.0)

    def test_gradient_mapping(self):
        """Without a prox the mapping is the gradient"""
        problem = quadratic_problem()
        stream = RandomStream(0)
        sample = sample_objective(problem, stream)
        x = np.array([0.5, -1.0])
        np.testing.assert_allclose(gradient_mapping(sample, x, 0.3), x - np.array([2.0, 2.0]))


class SolverConfigTest(SimpleTestCase):
    """Configuration validation"""

    def test_invalid_values(self):
        """β outside (0, 2) and nonpositive budgets are rejected"""
        policy = Constant(0.1)
        for kwargs in ({'beta': 2.0}, {'beta': 0.0}, {'max_iterations': 0},
                       {'tolerance': -1.0}, {'log_every': 0}, {'max_epochs': 0}):
            with self.subTest(kwargs=kwargs):
                with self.assertRaises(ValidationError):
                    SolverConfig(policy=policy, **kwargs)

    def test_strongly_convex_averaging_needs_switching_policy(self):
        """k0 comes from the switching policy"""
        with self.assertRaises(ValidationError):
            SolverConfig(policy=Constant(0.1), averaging=AveragingMode.STRONGLY_CONVEX)
        config = SolverConfig(policy=SwitchingStronglyConvex(L=1.0, mu=1.0), averaging='strongly-convex')
        self.assertEqual(config.k0, 8)

    def test_x0_shape(self):
        """x0 must match the dimension"""
        config = SolverConfig(policy=Constant(0.1), x0=np.zeros(3))
        with self.assertRaises(ValidationError):
            SspState.initial(quadratic_problem(), config)


class SspRunTest(SimpleTestCase):
    """The run loop"""

    def test_converges_on_quadratic(self):
        """The averaged point approaches (1, 2) and the tolerance rule fires"""
        problem = quadratic_problem()
        config = SolverConfig(
            policy=PolynomialDecay(alpha0=0.9, gamma=0.5, L=1.0), beta=1.0,
            tolerance=1e-3, max_iterations=200_000, log_every=500,
        )
        report, trace = ssp_run(problem, config)
        self.assertTrue(report.converged)
        self.assertEqual(report.reason, TerminationReason.TOLERANCE)
        np.testing.assert_allclose(report.point, [1.0, 2.0], atol=0.05)
        self.assertEqual(report.summary()['status'], 'converged')

    def test_trace_schema_and_logging_interval(self):
        """A row every log_every iterations plus none extra when the cap is aligned"""
        problem = quadratic_problem()
        config = SolverConfig(policy=Constant(0.2, L=1.0), max_iterations=1000, log_every=250)
        report, trace = ssp_run(problem, config)
        self.assertEqual(trace.columns, SSP_TRACE_COLUMNS)
        self.assertEqual(trace.column('iter'), [250, 500, 750, 1000])
        self.assertEqual(report.reason, TerminationReason.MAX_ITERATIONS)
        self.assertEqual(report.summary()['status'], 'max_epochs')
        self.assertEqual(report.iterations, 1000)
        self.assertAlmostEqual(report.epochs, 1000.0)
        final = trace.final_row
        self.assertEqual(report.objective, final['obj_est'])
        self.assertEqual(report.feasibility_residual, final['feas_residual'])
        self.assertIsNotNone(final['dist_sq_opt'])

    def test_final_row_when_cap_is_not_aligned(self):
        """The last iteration is always recorded"""
        config = SolverConfig(policy=Constant(0.2, L=1.0), max_iterations=1100, log_every=500)
        _, trace = ssp_run(quadratic_problem(), config)
        self.assertEqual(trace.column('iter'), [500, 1000, 1100])

    def test_epoch_budget(self):
        """max_epochs caps iterations at epochs·(|Ω₁| + |Ω₂|)/2"""
        config = SolverConfig(policy=Constant(0.2, L=1.0), max_epochs=30, log_every=7)
        report, _ = ssp_run(quadratic_problem(), config)
        self.assertEqual(report.iterations, 30)
        self.assertAlmostEqual(report.epochs, 30.0)

    def test_determinism(self):
        """Identical seed and config give identical reports and traces"""
        def run():
            config = SolverConfig(
                policy=PolynomialDecay(alpha0=0.5, L=1.0), seed=123, max_iterations=3000, log_every=300
            )
            return ssp_run(quadratic_problem(), config)

        first_report, first_trace = run()
        second_report, second_trace = run()
        np.testing.assert_array_equal(first_report.point, second_report.point)
        self.assertEqual(first_report.summary(), second_report.summary())
        for column in ('iter', 'alpha', 'obj_est', 'feas_residual', 'dist_sq_opt'):
            self.assertEqual(first_trace.column(column), second_trace.column(column))

    def test_last_iterate_mode(self):
        """LAST reports the final iterate"""
        config = SolverConfig(policy=Constant(0.5, L=1.0), averaging='last', max_iterations=3, log_every=1)
        report, _ = ssp_run(quadratic_problem(constraints=False), config)
        # x_k = 2 − 2·0.5^k per coordinate
        np.testing.assert_allclose(report.point, [1.75, 1.75])

    def test_large_constraint_sets_use_a_panel(self):
        """More than 10⁴ constraints are measured on a fixed panel"""
        rows = np.tile([[1.0, 0.0]], (12_000, 1))
        problem = CompositeProblem(
            dimension=2,
            objective=LeastSquaresObjective([np.eye(2)], [np.array([2.0, 2.0])]),
            constraints=AffineConstraints(rows, np.ones(12_000)),
        )
        config = SolverConfig(policy=Constant(0.5, L=1.0), max_iterations=10, log_every=10, panel_size=50)
        report, trace = ssp_run(problem, config)
        self.assertEqual(len(trace), 1)
        self.assertGreaterEqual(report.feasibility_residual, 0.0)


class TraceTest(SimpleTestCase):
    """CSV serialization"""

    def test_csv(self):
        """Header, repr floats and empty cells for missing values"""
        trace = ConvergenceTrace(SSP_TRACE_COLUMNS)
        trace.append(iter=10, alpha=0.1, obj_est=1 / 3, feas_residual=0.0, dist_sq_opt=None, elapsed_ms=1.5)
        stream = io.StringIO()
        trace.write_csv(stream)
        lines = stream.getvalue().splitlines()
        self.assertEqual(lines[0], 'iter,alpha,obj_est,feas_residual,dist_sq_opt,elapsed_ms')
        self.assertEqual(lines[1], f'10,0.1,{1 / 3!r},0.0,,1.5')
        self.assertEqual(float(lines[1].split(',')[2]), 1 / 3)

    def test_unknown_column(self):
        """Rows only take declared columns"""
        with self.assertRaises(KeyError):
            ConvergenceTrace(('epoch',)).append(step=1)

    def test_format_value(self):
        """Integers, floats, booleans and None"""
        self.assertEqual(format_value(None), '')
        self.assertEqual(format_value(np.int64(3)), '3')
        self.assertEqual(format_value(np.float64(0.1)), '0.1')
        self.assertEqual(format_value(True), 'true')

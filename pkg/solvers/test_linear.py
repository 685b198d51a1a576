"""
Tests for SSP-LS on linear equality/inequality systems.
"""
import numpy as np
import scipy.sparse as sp
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase
from scipy.stats import linregress

from builders.least_squares import build_constrained_ls
from builders.synthetic import planted_linear_system
from geometry.sets import NonnegativeOrthant
from oracles.reference import oracle_feasibility_cyclic
from problems.exceptions import InconsistentOracleError
from problems.linalg import DENSE_SVD_MAX_ROWS
from problems.sampling import RandomStream
from solvers.linear import (
    LinearFeasibilityProblem,
    LsConfig,
    LsState,
    RowStore,
    adaptive_stepsize_ls,
    frobenius_distribution,
    kappa_block,
    simplified_contraction,
    ssp_ls_run,
    ssp_ls_step,
    theoretical_contraction,
)
from solvers.reports import LS_TRACE_COLUMNS, TerminationReason


class AdaptiveStepsizeTest(SimpleTestCase):
    """α = δ‖r‖²/‖Aᵀr‖²"""

    def test_values(self):
        """Formula, 0/0 = 0, and an inconsistent zero image"""
        self.assertAlmostEqual(adaptive_stepsize_ls([1.0, 1.0], [1.0, 1.0, 0.0, 0.0], 1.0), 1.0)
        self.assertAlmostEqual(adaptive_stepsize_ls([2.0], [1.0, 1.0], 1.5), 3.0)
        self.assertEqual(adaptive_stepsize_ls([0.0, 0.0], [0.0, 0.0], 1.0), 0.0)
        with self.assertRaises(InconsistentOracleError):
            adaptive_stepsize_ls([1.0], [0.0, 0.0], 1.0)


class RowStoreTest(SimpleTestCase):
    """Dense and CSR row access agree"""

    def test_sparse_matches_dense(self):
        """dot, dense_row and relaxed projection"""
        rng = np.random.default_rng(0)
        dense = rng.standard_normal((8, 5)) * (rng.random((8, 5)) < 0.5)
        dense[3] = 0.0
        dense[3, 2] = 2.0
        v = rng.standard_normal(5)
        stores = RowStore(dense), RowStore(sp.csr_matrix(dense))
        for index in range(8):
            with self.subTest(row=index):
                self.assertAlmostEqual(stores[0].dot(index, v), stores[1].dot(index, v))
                np.testing.assert_array_equal(stores[0].dense_row(index), stores[1].dense_row(index))
        np.testing.assert_allclose(
            stores[0].relaxed_projection(3, v, -5.0, 1.5),
            stores[1].relaxed_projection(3, v, -5.0, 1.5),
        )
        np.testing.assert_allclose(stores[1].norms_sq, np.sum(dense ** 2, axis=1))

    def test_zero_violated_row(self):
        """A zero sparse row that is violated is inconsistent"""
        store = RowStore(sp.csr_matrix(np.zeros((1, 3))))
        with self.assertRaises(InconsistentOracleError):
            store.relaxed_projection(0, np.zeros(3), -1.0, 1.0)


class LinearFeasibilityProblemTest(SimpleTestCase):
    """Problem construction"""

    def test_frobenius_weights(self):
        """Blocks are drawn proportionally to ‖A_ζ‖_F²"""
        weights = frobenius_distribution([np.array([[3.0, 4.0]]), np.array([[0.0, 5.0], [0.0, 0.0]])])
        np.testing.assert_allclose(weights, [0.5, 0.5])
        with self.assertRaises(ValidationError):
            frobenius_distribution([np.zeros((1, 2))])

    def test_blocks_and_counts(self):
        """Row blocks, sizes and epoch accounting"""
        rng = np.random.default_rng(1)
        problem = LinearFeasibilityProblem(
            A=rng.standard_normal((7, 3)), b=np.zeros(7),
            C=rng.standard_normal((4, 3)), d=np.ones(4), block_size=3,
        )
        self.assertEqual([block.shape[0] for block in problem.blocks], [3, 3, 1])
        self.assertEqual(problem.samples_per_epoch, 11)
        self.assertEqual(problem.samples_per_iteration, 2)
        self.assertEqual(problem.dimension, 3)

    def test_validation(self):
        """Missing systems, mismatched shapes and bad block sizes"""
        with self.assertRaises(ValidationError):
            LinearFeasibilityProblem()
        with self.assertRaises(ValidationError):
            LinearFeasibilityProblem(A=np.eye(3), b=np.zeros(2))
        with self.assertRaises(ValidationError):
            LinearFeasibilityProblem(A=np.eye(3), b=np.zeros(3), C=np.ones((2, 4)), d=np.zeros(2))
        with self.assertRaises(ValidationError):
            LinearFeasibilityProblem(A=np.eye(3), b=np.zeros(3), block_size=0)
        with self.assertRaises(ValidationError):
            LsConfig(delta=2.0)

    def test_inequality_only(self):
        """Systems without equalities take only inequality steps"""
        problem = LinearFeasibilityProblem(C=np.array([[1.0, 1.0]]), d=[1.0])
        self.assertEqual(problem.samples_per_iteration, 1)
        report, trace = ssp_ls_run(problem, LsConfig(x0=np.array([3.0, 3.0]), beta=1.0))
        self.assertTrue(report.converged)
        self.assertEqual(report.extras['eq_residual'], 0.0)

    def test_as_composite(self):
        """The composite view keeps dimension, constants and constraints"""
        system = planted_linear_system(10, 5, 4, seed=2)
        problem = build_constrained_ls(system['A'], system['b'], system['C'], system['d'])
        composite = problem.as_composite()
        self.assertEqual(composite.dimension, 4)
        self.assertEqual(composite.constraints.size, 5)
        self.assertEqual(composite.objective.size, 10)
        self.assertEqual(composite.constants.L, problem.constants.L)


class KaczmarzEquivalenceTest(SimpleTestCase):
    """δ = β = 1 with single rows is randomized Kaczmarz"""

    def test_matches_reference_on_shared_samples(self):
        """1000 steps agree elementwise within 1e-12"""
        system = planted_linear_system(30, 20, 10, seed=3)
        problem = build_constrained_ls(system['A'], system['b'], system['C'], system['d'])
        config = LsConfig(delta=1.0, beta=1.0)
        state = LsState.initial(problem, config)
        stream = RandomStream(4)
        A, b, C, d = system['A'], system['b'], system['C'], system['d']
        reference = np.zeros(10)
        for _ in range(1000):
            ssp_ls_step(state, problem, config, stream)
            row = A[state.eq_index]
            reference = reference - (row @ reference - b[state.eq_index]) / (row @ row) * row
            row = C[state.ineq_index]
            gap = row @ reference - d[state.ineq_index]
            if gap > 0:
                reference = reference - gap / (row @ row) * row
            self.assertLessEqual(np.max(np.abs(state.x - reference)), 1e-12)


class SspLsStepPropertyTest(SimpleTestCase):
    """Per-step guarantees of the SSP-LS iteration"""

    def test_distance_to_planted_solution_never_grows(self):
        """‖x_{k+1} − x†‖ ≤ ‖x_k − x†‖ on every step, for single rows and blocks of three"""
        system = planted_linear_system(60, 80, 40, seed=12)
        for block_size in (1, 3):
            for relaxation in (0.5, 1.0, 1.96):
                problem = build_constrained_ls(
                    system['A'], system['b'], system['C'], system['d'], block_size=block_size,
                )
                config = LsConfig(delta=relaxation, beta=relaxation)
                state = LsState.initial(problem, config)
                stream = RandomStream(13)
                distance = np.linalg.norm(state.x - system['solution'])
                worst = -np.inf
                for _ in range(1500):
                    ssp_ls_step(state, problem, config, stream)
                    updated = np.linalg.norm(state.x - system['solution'])
                    worst = max(worst, updated - distance)
                    distance = updated
                with self.subTest(block_size=block_size, relaxation=relaxation):
                    self.assertLessEqual(worst, 1e-12)

    def test_unit_relaxation_satisfies_sampled_inequality(self):
        """With β = 1 the sampled row holds at z: (C_ξᵀz − d_ξ)₊ = 0, dense and CSR"""
        system = planted_linear_system(30, 60, 20, seed=14)
        C, d = system['C'], system['d']
        for matrix in (C, sp.csr_matrix(C)):
            problem = build_constrained_ls(system['A'], system['b'], matrix, d)
            config = LsConfig(delta=1.5, beta=1.0)
            state = LsState.initial(problem, config)
            stream = RandomStream(15)
            corrected = 0
            worst = 0.0
            for _ in range(1000):
                ssp_ls_step(state, problem, config, stream)
                row = C[state.ineq_index]
                if row @ state.v > d[state.ineq_index]:
                    corrected += 1
                worst = max(worst, row @ state.z - d[state.ineq_index])
            with self.subTest(sparse=sp.issparse(matrix)):
                self.assertGreater(corrected, 0)
                self.assertLessEqual(worst, 1e-12)


class SspLsRunTest(SimpleTestCase):
    """Run loop and trace"""

    def test_trace_starts_at_epoch_zero(self):
        """One row per epoch, beginning with the initial point"""
        system = planted_linear_system(20, 10, 5, seed=5)
        problem = build_constrained_ls(system['A'], system['b'], system['C'], system['d'])
        report, trace = ssp_ls_run(problem, LsConfig(max_epochs=3, tolerance=1e-12))
        self.assertEqual(trace.columns, LS_TRACE_COLUMNS)
        self.assertEqual(trace.column('epoch'), [0, 1, 2, 3])
        self.assertEqual(report.reason, TerminationReason.MAX_ITERATIONS)
        self.assertEqual(report.summary()['status'], 'max_epochs')
        # ceil((20 + 10)/2) iterations per epoch
        self.assertEqual(report.iterations, 45)
        self.assertEqual(report.extras['eq_residual'], trace.final_row['eq_residual'])

    def test_feasible_start_stops_immediately(self):
        """A starting point inside the tolerance ends at epoch 0"""
        system = planted_linear_system(8, 4, 3, seed=6)
        problem = build_constrained_ls(system['A'], system['b'], system['C'], system['d'])
        report, trace = ssp_ls_run(problem, LsConfig(x0=system['solution']))
        self.assertTrue(report.converged)
        self.assertEqual(report.epochs, 0)
        self.assertEqual(len(trace), 1)

    def test_time_budget_counts_the_partial_epoch(self):
        """Running out of time after one step reports 1/15 of an epoch, not a full one"""
        system = planted_linear_system(20, 10, 5, seed=5)
        problem = build_constrained_ls(system['A'], system['b'], system['C'], system['d'])
        report, trace = ssp_ls_run(problem, LsConfig(tolerance=1e-12, max_seconds=0.0))
        self.assertEqual(report.reason, TerminationReason.MAX_TIME)
        self.assertEqual(report.iterations, 1)
        self.assertAlmostEqual(report.epochs, 1.0 / 15.0)
        self.assertEqual(trace.column('epoch'), [0, report.epochs])

    def test_simple_set_is_respected(self):
        """Every iterate is nonnegative when Y is the orthant"""
        rng = np.random.default_rng(7)
        solution = rng.uniform(0.5, 1.5, 6)
        A = rng.standard_normal((12, 6))
        problem = build_constrained_ls(A, A @ solution, simple_set=NonnegativeOrthant())
        config = LsConfig()
        state = LsState.initial(problem, config)
        stream = RandomStream(8)
        for _ in range(500):
            ssp_ls_step(state, problem, config, stream)
            self.assertTrue(NonnegativeOrthant().contains(state.x))

    def test_sparse_blocks_converge(self):
        """CSR input with blocks of two rows reaches the tolerance"""
        system = planted_linear_system(40, 20, 10, seed=9)
        problem = build_constrained_ls(
            sp.csr_matrix(system['A']), system['b'], sp.csr_matrix(system['C']), system['d'], block_size=2,
        )
        report, _ = ssp_ls_run(problem, LsConfig(delta=1.0, beta=1.0, seed=1))
        self.assertTrue(report.converged)
        self.assertLessEqual(max(report.extras['eq_residual'], report.extras['ineq_residual']), 1e-3)

    def test_agrees_with_cyclic_projections(self):
        """Both methods find points of the same system"""
        system = planted_linear_system(15, 15, 8, seed=10)
        problem = build_constrained_ls(system['A'], system['b'], system['C'], system['d'])
        cyclic = oracle_feasibility_cyclic(problem, tol=1e-6)
        report, _ = ssp_ls_run(problem, LsConfig(delta=1.0, beta=1.0, tolerance=1e-6, max_epochs=5000))
        self.assertTrue(report.converged)
        # the planted system has a unique solution, so both land on it
        np.testing.assert_allclose(report.point, cyclic.point, atol=1e-4)


class PlantedConvergenceTest(SimpleTestCase):
    """Random consistent systems of the benchmark protocol"""

    def test_every_seed_reaches_tolerance(self):
        """m = p = 100, n = 50: all 10 seeds reach 1e-3 within 2000 epochs for δ = β in {0.96, 1.96}"""
        for relaxation in (0.96, 1.96):
            for seed in range(10):
                system = planted_linear_system(100, 100, 50, seed=seed)
                problem = build_constrained_ls(system['A'], system['b'], system['C'], system['d'])
                config = LsConfig(delta=relaxation, beta=relaxation, tolerance=1e-3, max_epochs=2000, seed=seed)
                report, _ = ssp_ls_run(problem, config)
                with self.subTest(relaxation=relaxation, seed=seed):
                    self.assertTrue(report.converged)
                    self.assertLessEqual(report.epochs, 2000)
                    self.assertLessEqual(report.extras['eq_residual'], 1e-3)
                    self.assertLessEqual(report.extras['ineq_residual'], 1e-3)

    def test_large_relaxation_is_faster_on_wide_systems(self):
        """m = 90, p = 110, n = 100: δ = β = 1.96 needs no more epochs than 0.96 on at least 9 of 10 seeds"""
        not_slower = 0
        for seed in range(10):
            system = planted_linear_system(90, 110, 100, seed=seed)
            problem = build_constrained_ls(system['A'], system['b'], system['C'], system['d'])
            epochs = {}
            for relaxation in (0.96, 1.96):
                config = LsConfig(delta=relaxation, beta=relaxation, tolerance=1e-3, max_epochs=2000, seed=seed)
                report, _ = ssp_ls_run(problem, config)
                self.assertTrue(report.converged)
                epochs[relaxation] = report.epochs
            not_slower += epochs[1.96] <= epochs[0.96]
        self.assertGreaterEqual(not_slower, 9)

    def test_log_distance_decays_linearly(self):
        """50-seed mean of log ‖x_k − x†‖² per epoch fits a line with R² ≥ 0.9"""
        system = planted_linear_system(100, 50, 50, seed=11)
        problem = build_constrained_ls(system['A'], system['b'], system['C'], system['d'])
        epochs = 30
        per_epoch = int(np.ceil(problem.samples_per_epoch / problem.samples_per_iteration))
        config = LsConfig(delta=1.0, beta=1.0)
        curves = []
        for seed in range(50):
            state = LsState.initial(problem, config)
            stream = RandomStream(seed)
            curve = []
            for _ in range(epochs):
                for _ in range(per_epoch):
                    ssp_ls_step(state, problem, config, stream)
                error = state.x - system['solution']
                curve.append(np.log(error @ error))
            curves.append(curve)
        fit = linregress(np.arange(1, epochs + 1), np.mean(curves, axis=0))
        self.assertLess(fit.slope, 0.0)
        self.assertGreaterEqual(fit.rvalue ** 2, 0.9)


class ContractionTest(SimpleTestCase):
    """Predicted contraction factors"""

    def test_kappa_block(self):
        """σ_max/σ_min⁺ over blocks, skipping zero blocks with a warning"""
        blocks = [np.diag([2.0, 1.0]), np.array([[3.0, 0.0]])]
        self.assertAlmostEqual(kappa_block(blocks), 2.0)
        with self.assertLogs('solvers.linear', level='WARNING'):
            self.assertAlmostEqual(kappa_block(blocks + [np.zeros((2, 2))]), 2.0)
        with self.assertRaises(ValidationError):
            kappa_block([np.zeros((1, 2))])

    def test_kappa_block_on_tall_blocks(self):
        """Blocks past the dense-SVD size agree with the SVD ratio, dense and CSR"""
        block = np.random.default_rng(16).standard_normal((200, 30))
        self.assertGreater(block.shape[0], DENSE_SVD_MAX_ROWS)
        values = np.linalg.svd(block, compute_uv=False)
        expected = values[0] / values[-1]
        for candidate in (block, sp.csr_matrix(block)):
            with self.subTest(sparse=sp.issparse(candidate)):
                self.assertAlmostEqual(kappa_block([candidate, np.array([[1.0] * 30])]) / expected, 1.0, places=6)

    def test_theoretical_contraction(self):
        """1 − min(δ(2−δ)/(2κ²), (2−δ)/(4δ), β(2−β)/2)/c"""
        self.assertAlmostEqual(theoretical_contraction(1.0, 1.0, 1.0, 2.0), 1.0 - 0.25 / 2.0)
        self.assertAlmostEqual(theoretical_contraction(1.0, 1.0, 2.0, 1.0), 1.0 - 0.125)
        with self.assertRaises(ValidationError):
            theoretical_contraction(1.0, 1.0, 1.0, 0.1)
        with self.assertRaises(ValidationError):
            theoretical_contraction(2.0, 1.0, 1.0, 2.0)

    def test_simplified_regimes(self):
        """1 − 1/(4c) for single rows, 1 − 1/(2cκ²) for wide blocks"""
        self.assertAlmostEqual(simplified_contraction(2.0), 0.875)
        self.assertAlmostEqual(simplified_contraction(2.0, kappa=2.0), 1.0 - 1.0 / 16.0)
        self.assertAlmostEqual(simplified_contraction(2.0), theoretical_contraction(1.0, 1.0, 1.0, 2.0))

"""
Empirical convergence-rate checks for SSP on small problems with known optima.
"""
import numpy as np
from django.test import SimpleTestCase
from scipy.stats import linregress

from builders.least_squares import build_constrained_ls
from problems.core import AffineConstraints, CompositeProblem, FunctionalObjective, LeastSquaresObjective, OptimumHint
from problems.sampling import CategoricalDistribution
from solvers.averaging import AveragingMode
from solvers.ssp import SolverConfig, ssp_run
from solvers.stepsizes import Constant, PolynomialDecay, SwitchingStronglyConvex

SEEDS = 20


def absolute_deviation_problem():
    """F(x) = mean |x − a| over a ∈ {−1, 0, 1}, F* = 2/3 at 0, with x ≤ 3."""
    points = np.array([-1.0, 0.0, 1.0])
    objective = FunctionalObjective(
        CategoricalDistribution.uniform(3),
        subgradient=lambda x, i: np.sign(x - points[i]),
        value=lambda x, i: abs(x[0] - points[i]),
    )
    return CompositeProblem(
        dimension=1,
        objective=objective,
        constraints=AffineConstraints(np.array([[1.0]]), [3.0]),
        optimum_hint=OptimumHint(value=2.0 / 3.0, point=np.zeros(1)),
        name='absolute-deviation',
    )


def centroid_problem(seed=0, dimension=20, count=200):
    """
    F(x) = mean ½‖x − a_i‖² around (2, 0, ..., 0) with the active constraint
    x₁ ≤ 1 and three inactive ones.
    """
    rng = np.random.default_rng(seed)
    center = np.zeros(dimension)
    center[0] = 2.0
    points = center + rng.standard_normal((count, dimension))
    optimum = points.mean(axis=0)
    optimum[0] = 1.0

    rows = np.zeros((4, dimension))
    rows[0, 0] = 1.0
    rows[1, 1] = rows[2, 2] = rows[3, 3] = 1.0
    offsets = np.array([1.0, 10.0, 10.0, 10.0])
    identity = np.eye(dimension)
    return CompositeProblem(
        dimension=dimension,
        objective=LeastSquaresObjective([identity] * count, list(points)),
        constraints=AffineConstraints(rows, offsets),
        optimum_hint=OptimumHint(point=optimum),
        name='centroid',
    )


class ConvexRateTest(SimpleTestCase):
    """Nonsmooth convex objective with γ = 1/2 decay"""

    def test_gap_decays_like_inverse_sqrt(self):
        """Mean F(x̂_k) − F* at k = 4·10⁴ is at most 0.65 of its value at 10⁴"""
        problem = absolute_deviation_problem()
        gaps = []
        for seed in range(SEEDS):
            config = SolverConfig(
                policy=PolynomialDecay(alpha0=0.45, gamma=0.5, L=0.0),
                beta=1.0,
                seed=seed,
                averaging=AveragingMode.CONVEX,
                max_iterations=40_000,
                log_every=10_000,
                x0=np.array([5.0]),
            )
            _, trace = ssp_run(problem, config)
            self.assertEqual(trace.column('iter'), [10_000, 20_000, 30_000, 40_000])
            gaps.append(np.array(trace.column('obj_est')) - 2.0 / 3.0)
        mean_gap = np.mean(gaps, axis=0)
        self.assertGreater(mean_gap[0], 0.0)
        self.assertLessEqual(mean_gap[-1], 0.65 * mean_gap[0])


class StronglyConvexRateTest(SimpleTestCase):
    """Switching stepsize with (k+1)² averaging"""

    def test_distance_and_feasibility_rates(self):
        """Doubling k shrinks ‖x̂ − x*‖² by 0.65 and the squared residual by 0.4"""
        problem = centroid_problem()
        distances, residuals = [], []
        for seed in range(SEEDS):
            config = SolverConfig(
                policy=SwitchingStronglyConvex(L=2.0, mu=1.0),
                beta=1.0,
                seed=seed,
                averaging=AveragingMode.STRONGLY_CONVEX,
                max_iterations=8000,
                log_every=4000,
            )
            _, trace = ssp_run(problem, config)
            self.assertEqual(trace.column('iter'), [4000, 8000])
            distances.append(trace.column('dist_sq_opt'))
            residuals.append(np.square(trace.column('feas_residual')))
        distances = np.mean(distances, axis=0)
        residuals = np.mean(residuals, axis=0)
        self.assertLessEqual(distances[1], 0.65 * distances[0])
        self.assertLessEqual(residuals[1], 0.4 * residuals[0])


class LinearRateTest(SimpleTestCase):
    """Constant stepsize on a consistent system, B = 0"""

    def test_log_distance_is_affine(self):
        """50-seed mean of log ‖x_k − x†‖² fits a line with R² ≥ 0.95"""
        rng = np.random.default_rng(7)
        A = rng.standard_normal((50, 5))
        solution = rng.standard_normal(5)
        C = rng.standard_normal((10, 5))
        d = C @ solution + rng.uniform(0.0, 0.5, 10)
        system = build_constrained_ls(A, A @ solution, C, d)
        problem = system.as_composite()
        problem.optimum_hint = OptimumHint(point=solution)
        L = problem.constants.L

        curves = []
        for seed in range(50):
            config = SolverConfig(
                policy=Constant(0.5 / L, L=L),
                beta=1.0,
                seed=seed,
                averaging=AveragingMode.LAST,
                max_iterations=1000,
                log_every=20,
            )
            _, trace = ssp_run(problem, config)
            curves.append(np.log(trace.column('dist_sq_opt')))
        mean_curve = np.mean(curves, axis=0)
        iterations = np.arange(20, 1020, 20)
        fit = linregress(iterations, mean_curve)
        self.assertLess(fit.slope, 0.0)
        self.assertGreaterEqual(fit.rvalue ** 2, 0.95)

"""
Tests for stepsize policies, iterate averaging and the rate diagnostics.
"""
import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from solvers.averaging import AveragingMode, AveragingState, averaging_weight, update_average
from solvers.stepsizes import (
    Constant,
    PolynomialDecay,
    SwitchingStronglyConvex,
    convex_rate_bound,
    feasibility_rate_constant,
    linear_rate_factor,
    policy_from_options,
    stepsize_switching,
    stepsize_upper_bound_convex,
    switching_threshold,
)


class StepsizeBoundTest(SimpleTestCase):
    """Admissible convex stepsizes"""

    def test_known_values(self):
        """1/2 at L = 0, 1 at L = 1, 1/L beyond"""
        self.assertEqual(stepsize_upper_bound_convex(0.0), 0.5)
        self.assertEqual(stepsize_upper_bound_convex(1.0), 1.0)
        self.assertEqual(stepsize_upper_bound_convex(4.0), 0.25)
        self.assertAlmostEqual(stepsize_upper_bound_convex(0.75), 2.0 / 3.0)

    def test_bound_keeps_weight_below_one(self):
        """Just inside the bound, 0 < α ≤ α(2 − αL) < 1"""
        for L in (0.0, 0.1, 0.5, 0.99, 1.0, 3.0, 50.0):
            with self.subTest(L=L):
                alpha = 0.999 * stepsize_upper_bound_convex(L)
                weight = alpha * (2.0 - alpha * L)
                self.assertGreater(alpha, 0.0)
                self.assertLessEqual(alpha, weight)
                self.assertLess(weight, 1.0)

    def test_negative_L(self):
        """L must be nonnegative"""
        with self.assertRaises(ValidationError):
            stepsize_upper_bound_convex(-1.0)


class PolicyTest(SimpleTestCase):
    """Policy objects"""

    def test_polynomial_decay(self):
        """α_k = α0/(k+1)^γ with the default α0 at 90% of the bound"""
        policy = PolynomialDecay(alpha0=0.4, gamma=0.5)
        self.assertAlmostEqual(policy.alpha(3), 0.2)
        self.assertAlmostEqual(PolynomialDecay(L=4.0).alpha0, 0.225)

    def test_polynomial_decay_rejects_bad_parameters(self):
        """α0 outside the bound or γ outside [0, 1)"""
        for kwargs in ({'alpha0': 0.5}, {'alpha0': 0.0}, {'gamma': 1.0}, {'alpha0': 0.3, 'L': 4.0}):
            with self.subTest(kwargs=kwargs):
                with self.assertRaises(ValidationError):
                    PolynomialDecay(**kwargs)

    def test_switching(self):
        """Constant 1/L through k0 − 1, then 8/(μ(k+1))"""
        self.assertEqual(switching_threshold(2.0, 1.0), 16)
        policy = SwitchingStronglyConvex(L=2.0, mu=1.0)
        self.assertEqual(policy.k0, 16)
        self.assertEqual(policy.alpha(0), 0.5)
        self.assertEqual(policy.alpha(15), 0.5)
        self.assertAlmostEqual(policy.alpha(16), 8.0 / 17.0)
        self.assertAlmostEqual(stepsize_switching(99, 0.0, 2.0), 0.04)

    def test_switching_logs_k0(self):
        """Construction reports k0 at DEBUG"""
        with self.assertLogs('solvers.stepsizes', level='DEBUG') as logs:
            SwitchingStronglyConvex(L=3.0, mu=2.0)
        self.assertIn('k0', logs.output[0])
        self.assertIn('12', logs.output[0])

    def test_switching_needs_mu(self):
        """μ must be positive"""
        with self.assertRaises(ValidationError):
            SwitchingStronglyConvex(L=1.0, mu=0.0)

    def test_constant(self):
        """Constant stepsizes must stay below 1/L and 4/μ"""
        self.assertEqual(Constant(0.1, L=2.0).alpha(1000), 0.1)
        with self.assertRaises(ValidationError):
            Constant(0.6, L=2.0)
        with self.assertRaises(ValidationError):
            Constant(0.5, mu=10.0)

    def test_policy_from_options(self):
        """CLI names build the matching policies"""
        self.assertIsInstance(policy_from_options('poly', L=1.0), PolynomialDecay)
        self.assertIsInstance(policy_from_options('switch', L=1.0, mu=0.5), SwitchingStronglyConvex)
        constant = policy_from_options('const', L=2.0, mu=1.0)
        self.assertAlmostEqual(constant.value, 0.45)
        with self.assertRaises(ValidationError):
            policy_from_options('adam')

    def test_weight_factor(self):
        """α(2 − αL)"""
        policy = Constant(0.25, L=2.0)
        self.assertAlmostEqual(policy.weight_factor(0), 0.375)


class AveragingTest(SimpleTestCase):
    """Weighted iterate averages"""

    def test_convex_weights(self):
        """Weights α_k(2 − α_kL)"""
        state = AveragingState(AveragingMode.CONVEX)
        update_average(state, np.array([1.0]), 1, 0.5, 0.0)
        update_average(state, np.array([4.0]), 2, 0.25, 0.0)
        np.testing.assert_allclose(state.average, [2.0])

    def test_strongly_convex_weights_start_after_k0(self):
        """(k+1)² weights, zero through k0"""
        self.assertEqual(averaging_weight(AveragingMode.STRONGLY_CONVEX, 3, 0.1, 1.0, k0=3), 0.0)
        self.assertEqual(averaging_weight(AveragingMode.STRONGLY_CONVEX, 4, 0.1, 1.0, k0=3), 25.0)
        state = AveragingState(AveragingMode.STRONGLY_CONVEX, k0=1)
        update_average(state, np.array([100.0]), 1, 0.1, 1.0)
        self.assertIsNone(state.average)
        update_average(state, np.array([1.0]), 2, 0.1, 1.0)
        update_average(state, np.array([2.0]), 3, 0.1, 1.0)
        np.testing.assert_allclose(state.average, [(9.0 * 1.0 + 16.0 * 2.0) / 25.0])

    def test_last_mode_keeps_no_average(self):
        """LAST never accumulates"""
        state = AveragingState(AveragingMode.LAST)
        update_average(state, np.ones(2), 1, 0.1, 0.0)
        self.assertIsNone(state.average)

    def test_negative_k0(self):
        """k0 must be nonnegative"""
        with self.assertRaises(ValidationError):
            AveragingState(AveragingMode.STRONGLY_CONVEX, k0=-1)


class DiagnosticsTest(SimpleTestCase):
    """Rate diagnostics"""

    def test_feasibility_rate_constant(self):
        """β(2−β)/(c·B_h² − β(2−β))"""
        self.assertAlmostEqual(feasibility_rate_constant(1.0, 2.0, 1.0), 1.0)
        with self.assertRaises(ValidationError):
            feasibility_rate_constant(1.0, 0.5, 1.0)

    def test_convex_rate_bound(self):
        """(d0 + B²Σα²)/Σα(2 − αL)"""
        alphas = 0.4 / np.sqrt(np.arange(1, 101))
        expected = (2.0 + 0.25 * np.sum(alphas ** 2)) / np.sum(2.0 * alphas)
        self.assertAlmostEqual(convex_rate_bound(2.0, 0.5, alphas), expected)

    def test_convex_rate_bound_decays_like_inverse_sqrt(self):
        """With γ = 1/2 quadrupling k roughly halves the bound"""
        def bound(k):
            return convex_rate_bound(1.0, 1.0, 0.4 / np.sqrt(np.arange(1, k + 1)))

        ratio = bound(40_000) / bound(10_000)
        self.assertLess(abs(ratio - 0.5), 0.1)

    def test_linear_rate_factor(self):
        """1 − μα/4 inside (0, 4/μ)"""
        self.assertAlmostEqual(linear_rate_factor(0.2, 2.0), 0.9)
        with self.assertRaises(ValidationError):
            linear_rate_factor(3.0, 2.0)
        self.assertTrue(math.isfinite(linear_rate_factor(1.0, 1.0)))

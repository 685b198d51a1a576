"""
Stepsize policies for SSP and the rate diagnostics that go with them.
"""
import logging
import math
from abc import ABC, abstractmethod

import numpy as np
from django.core.exceptions import ValidationError

logger = logging.getLogger(__name__)


def stepsize_upper_bound_convex(L):
    """
    Supremum of admissible stepsizes with 0 < α ≤ α(2 − αL) < 1.

    Returns 1/2 for L = 0, otherwise (1 − √((1 − L)₊))/L.
    """
    if L < 0:
        raise ValidationError(f"L must be nonnegative, got {L}")
    if L == 0:
        return 0.5
    return (1.0 - math.sqrt(max(1.0 - L, 0.0))) / L


def stepsize_switching(k, L, mu):
    """α_k = min(1/L, 8/(μ(k+1))), with 1/L = ∞ when L = 0."""
    if mu <= 0:
        raise ValidationError(f"Switching stepsize requires mu > 0, got {mu}")
    decay = 8.0 / (mu * (k + 1))
    if L == 0:
        return decay
    return min(1.0 / L, decay)


def switching_threshold(L, mu):
    """k0 = ⌈8L/μ⌉, the last iteration of the constant phase."""
    return int(math.ceil(8.0 * L / mu))


class StepsizePolicy(ABC):
    name = 'abstract'
    L = 0.0

    @abstractmethod
    def alpha(self, k):
        """Stepsize used at iteration k (k ≥ 0)."""

    def weight_factor(self, k):
        """α_k(2 − α_kL), the convex averaging weight."""
        alpha = self.alpha(k)
        return alpha * (2.0 - alpha * self.L)


class PolynomialDecay(StepsizePolicy):
    """α_k = alpha0/(k+1)^gamma."""
    name = 'poly'

    def __init__(self, alpha0=None, gamma=0.5, L=0.0):
        if not 0.0 <= gamma < 1.0:
            raise ValidationError(f"Decay exponent gamma must lie in [0, 1), got {gamma}")
        bound = stepsize_upper_bound_convex(L)
        if alpha0 is None:
            alpha0 = 0.9 * bound
        if not 0.0 < alpha0 < bound:
            raise ValidationError(
                f"alpha0 = {alpha0} must lie strictly inside (0, {bound}) for L = {L}"
            )
        self.alpha0 = float(alpha0)
        self.gamma = float(gamma)
        self.L = float(L)

    def alpha(self, k):
        return self.alpha0 / (k + 1) ** self.gamma

    def __repr__(self):
        return f"PolynomialDecay(alpha0={self.alpha0}, gamma={self.gamma}, L={self.L})"


class SwitchingStronglyConvex(StepsizePolicy):
    """Constant 1/L up to k0, then 8/(μ(k+1))."""
    name = 'switch'

    def __init__(self, L, mu):
        if mu is None or mu <= 0:
            raise ValidationError(f"Switching stepsize requires mu > 0, got {mu}")
        if L < 0:
            raise ValidationError(f"L must be nonnegative, got {L}")
        self.L = float(L)
        self.mu = float(mu)
        self.k0 = switching_threshold(self.L, self.mu)
        logger.debug(f"Switching stepsize: k0 = ceil(8L/mu) = {self.k0} (L={self.L}, mu={self.mu})")

    def alpha(self, k):
        return stepsize_switching(k, self.L, self.mu)

    def __repr__(self):
        return f"SwitchingStronglyConvex(L={self.L}, mu={self.mu})"


class Constant(StepsizePolicy):
    """Fixed α; with mu given it must satisfy α < min(1/L, 4/μ)."""
    name = 'const'

    def __init__(self, alpha, L=0.0, mu=None):
        if alpha is None or alpha <= 0:
            raise ValidationError(f"Constant stepsize must be positive, got {alpha}")
        if L > 0 and alpha >= 1.0 / L:
            raise ValidationError(f"Constant stepsize {alpha} must be below 1/L = {1.0 / L}")
        if mu is not None and mu > 0 and alpha >= 4.0 / mu:
            raise ValidationError(f"Constant stepsize {alpha} must be below 4/mu = {4.0 / mu}")
        self.value = float(alpha)
        self.L = float(L)
        self.mu = mu

    def alpha(self, k):
        return self.value

    def __repr__(self):
        return f"Constant(alpha={self.value}, L={self.L}, mu={self.mu})"


def policy_from_options(name, L=0.0, mu=None, alpha0=None, gamma=0.5):
    """Build a policy from the CLI names poly / switch / const."""
    L = 0.0 if L is None else float(L)
    if name == PolynomialDecay.name:
        return PolynomialDecay(alpha0=alpha0, gamma=gamma, L=L)
    if name == SwitchingStronglyConvex.name:
        return SwitchingStronglyConvex(L=L, mu=mu)
    if name == Constant.name:
        if alpha0 is None:
            bound = stepsize_upper_bound_convex(L)
            if mu:
                bound = min(bound, 4.0 / mu)
            alpha0 = 0.9 * bound
        return Constant(alpha0, L=L, mu=mu)
    raise ValidationError(f"Unknown stepsize policy '{name}'")


# ----------------------------------------------------------------------------
# Rate diagnostics
# ----------------------------------------------------------------------------

def feasibility_rate_constant(beta, c, B_h):
    """β(2−β)/(c·B_h² − β(2−β)), the feasibility-to-distance scaling constant."""
    relaxation = beta * (2.0 - beta)
    denominator = c * B_h ** 2 - relaxation
    if denominator <= 0:
        raise ValidationError("Regularity constant too small for the given relaxation")
    return relaxation / denominator


def convex_rate_bound(initial_distance_sq, B, alphas, L=0.0):
    """(‖v0 − v̄0‖² + B²Σα_j²)/S_k for the convex averaged iterate."""
    alphas = np.asarray(alphas, dtype=float)
    total_weight = float(np.sum(alphas * (2.0 - alphas * L)))
    if total_weight <= 0:
        raise ValidationError("Convex rate bound needs at least one positive stepsize")
    return (initial_distance_sq + B ** 2 * float(np.sum(alphas ** 2))) / total_weight


def linear_rate_factor(alpha, mu):
    """Per-iteration contraction 1 − μα/4 of the constant-stepsize B=0 regime."""
    if not 0 < alpha < 4.0 / mu:
        raise ValidationError("Linear rate needs 0 < alpha < 4/mu")
    return 1.0 - mu * alpha / 4.0

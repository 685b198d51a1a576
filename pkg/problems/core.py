"""
Composite stochastic problems: min E[f(x,ζ) + g(x,ζ)] over x in Y subject to
h(x,ξ) ≤ 0 for all ξ, expressed as sampling oracles.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from django.core.exceptions import ValidationError

from geometry.sets import SimpleSet, WholeSpace
from .linalg import as_row_block, spectral_norm
from .sampling import CategoricalDistribution

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AssumptionConstants:
    """
    Constants of the growth, strong convexity, bounded subgradient and
    regularity assumptions. Advisory: stepsize policies and diagnostics read
    them, solvers never refuse to run on loose values.
    """
    L: float = 0.0
    B: Optional[float] = None
    mu: float = 0.0
    B_h: float = 1.0
    c: Optional[float] = None

    def __post_init__(self):
        if self.L < 0:
            raise ValidationError(f"L must be nonnegative, got {self.L}")
        if self.B is not None and self.B < 0:
            raise ValidationError(f"B must be nonnegative, got {self.B}")
        if self.mu < 0:
            raise ValidationError(f"mu must be nonnegative, got {self.mu}")
        if self.B_h <= 0:
            raise ValidationError(f"B_h must be positive, got {self.B_h}")
        if self.c is not None:
            if self.c <= 0:
                raise ValidationError(f"c must be positive, got {self.c}")
            if self.c * self.B_h ** 2 <= 1:
                raise ValidationError(
                    f"Regularity constant too small: c*B_h^2 = {self.c * self.B_h ** 2} must exceed 1"
                )


@dataclass(frozen=True)
class OptimumHint:
    """Known optimal value and/or point; used by traces and tests only."""
    value: Optional[float] = None
    point: Optional[np.ndarray] = None


# ----------------------------------------------------------------------------
# Objective oracles
# ----------------------------------------------------------------------------

class ObjectiveOracle(ABC):
    """f(·,ζ) + g(·,ζ) for ζ drawn from `distribution`. g defaults to 0."""

    def __init__(self, distribution: CategoricalDistribution):
        self.distribution = distribution

    @property
    def size(self):
        return self.distribution.size

    @abstractmethod
    def subgradient(self, x, index):
        """One (sub)gradient of f(·, index) at x."""

    def prox(self, x, alpha, index):
        return x

    def value(self, x, index):
        """f(x,index) + g(x,index), or None when the value is not exposed."""
        return None

    def expected_value(self, x, indices=None):
        """
        Exact expectation over the distribution, or the plain mean over a
        fixed index sample when `indices` is given.
        """
        if indices is None:
            probabilities = self.distribution.probabilities
            total = 0.0
            for index in np.flatnonzero(probabilities):
                term = self.value(x, int(index))
                if term is None:
                    return None
                total += probabilities[index] * term
            return float(total)
        values = [self.value(x, int(index)) for index in indices]
        if any(term is None for term in values):
            return None
        return float(np.mean(values))


class FunctionalObjective(ObjectiveOracle):
    """Objective assembled from user callables taking (x, index)."""

    def __init__(self, distribution, subgradient: Callable, prox: Callable = None,
                 value: Callable = None):
        super().__init__(distribution)
        self._subgradient = subgradient
        self._prox = prox
        self._value = value

    def subgradient(self, x, index):
        return np.asarray(self._subgradient(x, index), dtype=float)

    def prox(self, x, alpha, index):
        if self._prox is None:
            return x
        return np.asarray(self._prox(x, alpha, index), dtype=float)

    def value(self, x, index):
        if self._value is None:
            return None
        return float(self._value(x, index))


class LeastSquaresObjective(ObjectiveOracle):
    """f(x,ζ) = ½‖A_ζᵀx − b_ζ‖² over row blocks of A; g = 0."""

    def __init__(self, blocks, rhs, distribution=None):
        if not blocks:
            raise ValidationError("Least-squares objective needs at least one block")
        self.blocks = [as_row_block(block) for block in blocks]
        self.rhs = [np.asarray(part, dtype=float).ravel() for part in rhs]
        if distribution is None:
            distribution = CategoricalDistribution.uniform(len(self.blocks))
        super().__init__(distribution)

    def residual(self, x, index):
        return self.blocks[index] @ x - self.rhs[index]

    def subgradient(self, x, index):
        return np.asarray(self.blocks[index].T @ self.residual(x, index)).ravel()

    def value(self, x, index):
        residual = self.residual(x, index)
        return 0.5 * float(residual @ residual)


class ZeroObjective(ObjectiveOracle):
    """f = g = 0: pure feasibility."""

    def __init__(self, dimension):
        super().__init__(CategoricalDistribution.uniform(1))
        self.dimension = dimension

    def subgradient(self, x, index):
        return np.zeros(self.dimension)

    def value(self, x, index):
        return 0.0


# ----------------------------------------------------------------------------
# Constraint oracles
# ----------------------------------------------------------------------------

class ConstraintOracle(ABC):
    """h(·,ξ) ≤ 0 for ξ drawn from `distribution`; `bound` declares B_h."""

    def __init__(self, distribution: CategoricalDistribution, bound: Optional[float] = None):
        self.distribution = distribution
        self.bound = bound

    @property
    def size(self):
        return self.distribution.size

    @abstractmethod
    def evaluate(self, x, index):
        """Return (h(x,index), one subgradient of h(·,index) at x)."""

    def value(self, x, index):
        return self.evaluate(x, index)[0]

    def violations(self, x, indices):
        """(h(x,ξ))₊ for each ξ in `indices`."""
        return np.array([max(self.value(x, int(index)), 0.0) for index in indices])


class AffineConstraints(ConstraintOracle):
    """h(x,ξ) = C_ξᵀx − d_ξ for single rows C_ξ."""

    def __init__(self, rows, offsets, distribution=None):
        self.rows = as_row_block(rows)
        self.offsets = np.asarray(offsets, dtype=float).ravel()
        if self.rows.shape[0] != self.offsets.size:
            raise ValidationError(
                f"Constraint rows ({self.rows.shape[0]}) and offsets ({self.offsets.size}) disagree"
            )
        if sp.issparse(self.rows):
            norms = np.sqrt(np.asarray(self.rows.multiply(self.rows).sum(axis=1)).ravel())
        else:
            norms = np.linalg.norm(self.rows, axis=1)
        self.row_norms = norms
        if distribution is None:
            distribution = CategoricalDistribution.uniform(self.offsets.size)
        super().__init__(distribution, bound=float(norms.max()) if norms.size else None)

    def _row(self, index):
        if sp.issparse(self.rows):
            return self.rows.getrow(index).toarray().ravel()
        return self.rows[index]

    def evaluate(self, x, index):
        row = self._row(index)
        return float(row @ x - self.offsets[index]), np.array(row, dtype=float)

    def violations(self, x, indices):
        indices = np.asarray(indices, dtype=int)
        values = self.rows[indices] @ x - self.offsets[indices]
        return np.maximum(np.asarray(values).ravel(), 0.0)


class SetDistanceConstraints(ConstraintOracle):
    """
    h(x,ξ) = dist(x, X_ξ) for simple sets X_ξ. The subgradient is the unit
    vector (x − Π(x))/‖x − Π(x)‖ outside X_ξ and 0 inside, so the Polyak step
    with β=1 is the projection onto the sampled set.
    """

    def __init__(self, sets, distribution=None):
        if not sets:
            raise ValidationError("Set-distance constraints need at least one set")
        self.sets = list(sets)
        if distribution is None:
            distribution = CategoricalDistribution.uniform(len(self.sets))
        super().__init__(distribution, bound=1.0)

    def evaluate(self, x, index):
        offset = x - self.sets[index].project(x)
        distance = float(np.linalg.norm(offset))
        if distance == 0.0:
            return 0.0, np.zeros_like(x)
        return distance, offset / distance


class FunctionalConstraints(ConstraintOracle):
    """Constraints assembled from a user callable (x, index) -> (value, subgradient)."""

    def __init__(self, distribution, evaluate: Callable, bound=None):
        super().__init__(distribution, bound=bound)
        self._evaluate = evaluate

    def evaluate(self, x, index):
        value, gradient = self._evaluate(x, index)
        return float(value), np.asarray(gradient, dtype=float)


# ----------------------------------------------------------------------------
# Problem bundle and samples
# ----------------------------------------------------------------------------

@dataclass
class CompositeProblem:
    dimension: int
    objective: ObjectiveOracle
    simple_set: SimpleSet = field(default_factory=WholeSpace)
    constraints: Optional[ConstraintOracle] = None
    constants: Optional[AssumptionConstants] = None
    optimum_hint: Optional[OptimumHint] = None
    name: str = 'custom'
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.dimension) <= 0:
            raise ValidationError(f"Dimension must be positive, got {self.dimension}")
        self.dimension = int(self.dimension)

    @property
    def has_constraints(self):
        return self.constraints is not None

    @property
    def samples_per_iteration(self):
        return 1 + int(self.has_constraints)

    @property
    def samples_per_epoch(self):
        total = self.objective.size
        if self.has_constraints:
            total += self.constraints.size
        return total


@dataclass(frozen=True)
class ObjectiveSample:
    index: int
    oracle: ObjectiveOracle

    def subgradient(self, x):
        return self.oracle.subgradient(x, self.index)

    def prox(self, x, alpha):
        return self.oracle.prox(x, alpha, self.index)

    def value(self, x):
        return self.oracle.value(x, self.index)


@dataclass(frozen=True)
class ConstraintSample:
    index: int
    oracle: ConstraintOracle

    def evaluate(self, x):
        return self.oracle.evaluate(x, self.index)


def sample_objective(problem: CompositeProblem, stream) -> ObjectiveSample:
    return ObjectiveSample(stream.draw(problem.objective.distribution), problem.objective)


def sample_constraint(problem: CompositeProblem, stream) -> Optional[ConstraintSample]:
    """Draw ξ; returns None (and consumes nothing) when there are no constraints."""
    if problem.constraints is None:
        return None
    return ConstraintSample(stream.draw(problem.constraints.distribution), problem.constraints)


def estimate_ls_constants(blocks_A, rows_C=None) -> AssumptionConstants:
    """
    Constants of f(x) = ½E‖A_ζᵀx − b_ζ‖².

    Args:
        blocks_A: list of row blocks of A
        rows_C: optional inequality matrix; its largest row norm becomes B_h

    Returns:
        AssumptionConstants with L = 2·max‖A_ζ‖², B = 0 and mu = 0; strong
        convexity is not estimated, pass mu explicitly where a policy needs it
    """
    if blocks_A is None or len(blocks_A) == 0:
        raise ValidationError("At least one block is required to estimate LS constants")
    largest = max(spectral_norm(block) for block in blocks_A)
    if largest == 0.0:
        logger.warning("All equality blocks are zero; the least-squares objective is constant (L = 0)")
    bound = 1.0
    if rows_C is not None:
        rows = as_row_block(rows_C)
        if sp.issparse(rows):
            norms = np.sqrt(np.asarray(rows.multiply(rows).sum(axis=1)).ravel())
        else:
            norms = np.linalg.norm(rows, axis=1)
        if norms.size and norms.max() > 0:
            bound = float(norms.max())
    return AssumptionConstants(L=2.0 * largest ** 2, B=0.0, mu=0.0, B_h=bound)

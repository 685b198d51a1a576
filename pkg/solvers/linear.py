"""
SSP for linear systems: find x in Y with Ax = b and Cx ≤ d.

The equality step is a relaxed block projection with adaptive stepsize
α = δ‖r‖²/‖A_ζ r‖² (r = A_ζᵀx − b_ζ); the inequality step is the relaxed
projection onto one sampled halfspace. Blocks and rows are drawn with
Frobenius-norm weights unless other weights are given.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from django.core.exceptions import ValidationError

from geometry.prox import polyak_step
from geometry.sets import SimpleSet, WholeSpace, project
from problems.core import (
    AffineConstraints,
    CompositeProblem,
    LeastSquaresObjective,
    ZeroObjective,
    estimate_ls_constants,
)
from problems.exceptions import InconsistentOracleError, IterateDivergedError
from problems.linalg import as_row_block, extreme_singular_values, frobenius_norm_sq
from problems.sampling import CategoricalDistribution, RandomStream
from .reports import LS_TRACE_COLUMNS, ConvergenceTrace, SolveReport, TerminationReason

logger = logging.getLogger(__name__)

# relative cut-off under which a singular value counts as zero
RANK_TOLERANCE = 1e-12


def frobenius_distribution(blocks):
    """weight_i = ‖block_i‖_F² / Σ_j ‖block_j‖_F²."""
    if not blocks:
        raise ValidationError("Frobenius distribution needs at least one block")
    norms = np.array([frobenius_norm_sq(as_row_block(block)) for block in blocks])
    total = norms.sum()
    if total == 0.0:
        raise ValidationError("All blocks are zero; Frobenius weights are undefined")
    return norms / total


class RowStore:
    """
    Single-row access to a dense or CSR matrix. CSR rows are read straight
    from the index arrays to keep per-step cost independent of matrix size.
    """

    def __init__(self, matrix):
        self.matrix = as_row_block(matrix)
        self.sparse = sp.issparse(self.matrix)
        if self.sparse:
            self.matrix.sort_indices()
            squares = np.asarray(self.matrix.multiply(self.matrix).sum(axis=1)).ravel()
        else:
            squares = np.sum(np.square(self.matrix), axis=1)
        self.norms_sq = squares

    @property
    def shape(self):
        return self.matrix.shape

    def dot(self, index, x):
        if self.sparse:
            start, stop = self.matrix.indptr[index], self.matrix.indptr[index + 1]
            return float(self.matrix.data[start:stop] @ x[self.matrix.indices[start:stop]])
        return float(self.matrix[index] @ x)

    def dense_row(self, index):
        if self.sparse:
            start, stop = self.matrix.indptr[index], self.matrix.indptr[index + 1]
            row = np.zeros(self.matrix.shape[1])
            row[self.matrix.indices[start:stop]] = self.matrix.data[start:stop]
            return row
        return self.matrix[index]

    def relaxed_projection(self, index, v, offset, beta):
        """v − β(cᵀv − d)₊/‖c‖²·c without densifying sparse rows."""
        violation = self.dot(index, v) - offset
        if violation <= 0.0:
            return v
        if not self.sparse:
            return polyak_step(v, violation, self.matrix[index], beta)
        norm_sq = self.norms_sq[index]
        if norm_sq == 0.0:
            raise InconsistentOracleError(f"Inequality row {index} is zero but violated by {violation}")
        start, stop = self.matrix.indptr[index], self.matrix.indptr[index + 1]
        result = v.copy()
        result[self.matrix.indices[start:stop]] -= (beta * violation / norm_sq) * self.matrix.data[start:stop]
        return result

    def matvec(self, x):
        return np.asarray(self.matrix @ x).ravel()


class LinearFeasibilityProblem:
    """
    Row partition of (A, b) into equality blocks and of (C, d) into single
    inequality rows, a simple set Y, and two sampling distributions.
    """

    def __init__(self, A=None, b=None, C=None, d=None, simple_set: SimpleSet = None,
                 block_size: int = 1, eq_weights=None, ineq_weights=None, name='ls'):
        if A is None and C is None:
            raise ValidationError("A linear system needs equality rows, inequality rows, or both")
        if block_size < 1:
            raise ValidationError(f"Block size must be at least 1, got {block_size}")
        self.name = name
        self.simple_set = simple_set or WholeSpace()
        self.block_size = int(block_size)

        self.A = None if A is None else as_row_block(A)
        self.C = None if C is None else as_row_block(C)
        self.b = None if A is None else self._vector(b, self.A.shape[0], 'b')
        self.d = None if C is None else self._vector(d, self.C.shape[0], 'd')

        dimensions = {matrix.shape[1] for matrix in (self.A, self.C) if matrix is not None}
        if len(dimensions) != 1:
            raise ValidationError(f"A and C have different column counts: {sorted(dimensions)}")
        self.dimension = dimensions.pop()

        self.blocks = []
        self.block_rhs = []
        self.eq_distribution = None
        if self.A is not None and self.A.shape[0] > 0:
            for start in range(0, self.A.shape[0], self.block_size):
                stop = min(start + self.block_size, self.A.shape[0])
                self.blocks.append(self.A[start:stop])
                self.block_rhs.append(self.b[start:stop])
            weights = frobenius_distribution(self.blocks) if eq_weights is None else eq_weights
            self.eq_distribution = CategoricalDistribution(weights)
            if self.eq_distribution.size != len(self.blocks):
                raise ValidationError("Equality weights do not match the number of blocks")

        self.rows = None
        self.ineq_distribution = None
        if self.C is not None and self.C.shape[0] > 0:
            self.rows = RowStore(self.C)
            if ineq_weights is None:
                if self.rows.norms_sq.sum() == 0.0:
                    raise ValidationError("All inequality rows are zero")
                ineq_weights = self.rows.norms_sq
            self.ineq_distribution = CategoricalDistribution(ineq_weights)
            if self.ineq_distribution.size != self.C.shape[0]:
                raise ValidationError("Inequality weights do not match the number of rows")

        self.constants = estimate_ls_constants(self.blocks, self.C) if self.blocks else None

    @staticmethod
    def _vector(values, length, label):
        if values is None:
            raise ValidationError(f"Right-hand side {label} is required")
        vector = np.asarray(values.toarray() if sp.issparse(values) else values, dtype=float).ravel()
        if vector.size != length:
            raise ValidationError(f"{label} has {vector.size} entries, expected {length}")
        return vector

    @property
    def num_eq_rows(self):
        return 0 if self.A is None else self.A.shape[0]

    @property
    def num_ineq_rows(self):
        return 0 if self.C is None else self.C.shape[0]

    @property
    def samples_per_epoch(self):
        return self.num_eq_rows + self.num_ineq_rows

    @property
    def samples_per_iteration(self):
        return int(self.eq_distribution is not None) + int(self.ineq_distribution is not None)

    def eq_residual(self, x):
        if self.A is None:
            return 0.0
        return float(np.linalg.norm(np.asarray(self.A @ x).ravel() - self.b))

    def ineq_residual(self, x):
        if self.C is None:
            return 0.0
        return float(np.linalg.norm(np.maximum(np.asarray(self.C @ x).ravel() - self.d, 0.0)))

    def objective(self, x):
        """½E‖A_ζᵀx − b_ζ‖² under the equality distribution."""
        if not self.blocks:
            return 0.0
        total = 0.0
        for index, probability in enumerate(self.eq_distribution.probabilities):
            if probability > 0:
                residual = np.asarray(self.blocks[index] @ x).ravel() - self.block_rhs[index]
                total += probability * 0.5 * float(residual @ residual)
        return total

    def as_composite(self) -> CompositeProblem:
        """The same system as a CompositeProblem for the general SSP solver."""
        if self.blocks:
            objective = LeastSquaresObjective(self.blocks, self.block_rhs, self.eq_distribution)
        else:
            objective = ZeroObjective(self.dimension)
        constraints = None
        if self.rows is not None:
            constraints = AffineConstraints(self.C, self.d, self.ineq_distribution)
        return CompositeProblem(
            dimension=self.dimension,
            objective=objective,
            simple_set=self.simple_set,
            constraints=constraints,
            constants=self.constants,
            name=f"{self.name}-composite",
        )


@dataclass
class LsConfig:
    delta: float = 1.96
    beta: float = 1.96
    tolerance: float = 1e-3
    max_epochs: int = 1000
    seed: int = 0
    block_size: int = 1
    x0: Optional[np.ndarray] = None
    max_seconds: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.delta < 2.0:
            raise ValidationError(f"delta must lie in (0, 2), got {self.delta}")
        if not 0.0 < self.beta < 2.0:
            raise ValidationError(f"beta must lie in (0, 2), got {self.beta}")
        if self.tolerance <= 0:
            raise ValidationError("tolerance must be positive")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be at least 1")
        if self.block_size < 1:
            raise ValidationError("block_size must be at least 1")


@dataclass
class LsState:
    x: np.ndarray
    k: int = 0
    v: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    alpha: Optional[float] = None
    eq_index: Optional[int] = None
    ineq_index: Optional[int] = None

    @classmethod
    def initial(cls, problem: LinearFeasibilityProblem, config: LsConfig):
        x0 = np.zeros(problem.dimension) if config.x0 is None else np.asarray(config.x0, dtype=float)
        if x0.shape != (problem.dimension,):
            raise ValidationError(f"x0 has shape {x0.shape}, expected ({problem.dimension},)")
        return cls(x=project(problem.simple_set, x0))


def adaptive_stepsize_ls(residual, image, delta):
    """δ‖r‖²/‖w‖² with 0/0 = 0; a nonzero r with zero w is inconsistent."""
    residual = np.asarray(residual, dtype=float).ravel()
    image = np.asarray(image, dtype=float).ravel()
    residual_sq = float(residual @ residual)
    if residual_sq == 0.0:
        return 0.0
    image_sq = float(image @ image)
    if image_sq == 0.0:
        raise InconsistentOracleError("Block residual is nonzero but its image is zero")
    return delta * residual_sq / image_sq


def ssp_ls_step(state: LsState, problem: LinearFeasibilityProblem, config: LsConfig,
                stream: RandomStream) -> LsState:
    x = state.x
    v = x
    alpha = 0.0
    eq_index = None
    if problem.eq_distribution is not None:
        eq_index = stream.draw(problem.eq_distribution)
        block = problem.blocks[eq_index]
        residual = np.asarray(block @ x).ravel() - problem.block_rhs[eq_index]
        image = np.asarray(block.T @ residual).ravel()
        alpha = adaptive_stepsize_ls(residual, image, config.delta)
        if alpha > 0.0:
            v = x - alpha * image

    z = v
    ineq_index = None
    if problem.ineq_distribution is not None:
        ineq_index = stream.draw(problem.ineq_distribution)
        z = problem.rows.relaxed_projection(ineq_index, v, problem.d[ineq_index], config.beta)

    x_next = project(problem.simple_set, z)
    if not np.all(np.isfinite(x_next)):
        raise IterateDivergedError(state.k)

    state.x = x_next
    state.v = v
    state.z = z
    state.alpha = alpha
    state.eq_index = eq_index
    state.ineq_index = ineq_index
    state.k += 1
    return state


def ssp_ls_run(problem: LinearFeasibilityProblem, config: LsConfig):
    """
    Iterate until max(‖Ax − b‖, ‖(Cx − d)₊‖) ≤ tolerance or the epoch budget
    runs out. One epoch is m + p drawn indices.

    Returns:
        (SolveReport, ConvergenceTrace) with one trace row per epoch; an epoch
        cut short by max_seconds is reported as a fraction
    """
    stream = RandomStream(config.seed)
    state = LsState.initial(problem, config)
    trace = ConvergenceTrace(LS_TRACE_COLUMNS)
    per_epoch = max(1, int(math.ceil(problem.samples_per_epoch / problem.samples_per_iteration)))

    logger.info(
        f"SSP-LS start: problem={problem.name}, m={problem.num_eq_rows}, p={problem.num_ineq_rows}, "
        f"n={problem.dimension}, delta={config.delta}, beta={config.beta}, seed={config.seed}"
    )
    started = time.perf_counter()

    def record(epoch):
        eq_residual = problem.eq_residual(state.x)
        ineq_residual = problem.ineq_residual(state.x)
        trace.append(
            epoch=epoch,
            eq_residual=eq_residual,
            ineq_residual=ineq_residual,
            elapsed_ms=(time.perf_counter() - started) * 1000.0,
        )
        return max(eq_residual, ineq_residual)

    epoch = 0
    reason = TerminationReason.MAX_ITERATIONS
    if record(epoch) <= config.tolerance:
        reason = TerminationReason.TOLERANCE
    else:
        out_of_time = False
        while epoch < config.max_epochs and not out_of_time:
            steps = 0
            while steps < per_epoch:
                ssp_ls_step(state, problem, config, stream)
                steps += 1
                if config.max_seconds is not None and time.perf_counter() - started > config.max_seconds:
                    out_of_time = True
                    break
            # an epoch cut short by the time budget counts fractionally
            epoch = epoch + 1 if steps == per_epoch else epoch + steps / per_epoch
            residual = record(epoch)
            logger.debug(f"epoch={epoch} residual={residual}")
            if residual <= config.tolerance:
                reason = TerminationReason.TOLERANCE
                break
            if out_of_time:
                reason = TerminationReason.MAX_TIME

    final = trace.final_row
    report = SolveReport(
        point=state.x.copy(),
        iterations=state.k,
        epochs=epoch,
        objective=problem.objective(state.x),
        feasibility_residual=final['ineq_residual'],
        reason=reason,
        elapsed_seconds=time.perf_counter() - started,
        extras={'eq_residual': final['eq_residual'], 'ineq_residual': final['ineq_residual']},
    )
    logger.info(f"SSP-LS stop: {reason.value} after {epoch} epochs ({state.k} iterations)")
    return report, trace


def kappa_block(blocks):
    """max over blocks of σ_max/σ_min⁺; zero blocks are skipped."""
    if not blocks:
        raise ValidationError("kappa_block needs at least one block")
    worst = None
    for index, block in enumerate(blocks):
        largest, smallest = extreme_singular_values(block, rank_tolerance=RANK_TOLERANCE)
        if largest == 0.0:
            logger.warning(f"Skipping zero block {index} in kappa_block")
            continue
        ratio = largest / smallest
        worst = ratio if worst is None else max(worst, ratio)
    if worst is None:
        raise ValidationError("All blocks are zero; kappa_block is undefined")
    return worst


def theoretical_contraction(delta, beta, kappa, c):
    """1 − (1/c)·min(δ(2−δ)/(2κ²), (2−δ)/(4δ), β(2−β)/2)."""
    if not 0.0 < delta < 2.0 or not 0.0 < beta < 2.0:
        raise ValidationError("delta and beta must lie in (0, 2)")
    if kappa < 1.0:
        raise ValidationError(f"kappa must be at least 1, got {kappa}")
    if c <= 0:
        raise ValidationError(f"c must be positive, got {c}")
    rate = min(
        delta * (2.0 - delta) / (2.0 * kappa ** 2),
        (2.0 - delta) / (4.0 * delta),
        beta * (2.0 - beta) / 2.0,
    )
    factor = 1.0 - rate / c
    if factor <= 0.0:
        raise ValidationError(f"c = {c} is too small to be a regularity constant for this system")
    return factor


def simplified_contraction(c, kappa=None):
    """1 − 1/(4c) for δ=β=1 with single rows; 1 − 1/(2cκ²) for wide blocks."""
    if c <= 0:
        raise ValidationError(f"c must be positive, got {c}")
    rate = 0.25
    if kappa is not None:
        rate = min(rate, 1.0 / (2.0 * kappa ** 2))
    return 1.0 - rate / c

"""
Stochastic subgradient projection (SSP).

Each iteration takes a proximal subgradient step on a sampled objective
component, a relaxed Polyak step on a sampled constraint, and projects onto Y:

    v = prox_{αg(·,ζ)}(x − α∇f(x,ζ))
    z = v − β(h(v,ξ))₊/‖∇h(v,ξ)‖²·∇h(v,ξ)
    x⁺ = Π_Y(z)
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from django.core.exceptions import ValidationError

from geometry.prox import polyak_step
from geometry.sets import project
from problems.core import CompositeProblem, sample_constraint, sample_objective
from problems.exceptions import IterateDivergedError
from problems.sampling import TRACE_STREAM_KEY, RandomStream
from .averaging import AveragingMode, AveragingState, update_average
from .reports import SSP_TRACE_COLUMNS, ConvergenceTrace, SolveReport, TerminationReason
from .stepsizes import StepsizePolicy

logger = logging.getLogger(__name__)

# index sets up to this size are evaluated exactly in traces
EXACT_EVALUATION_LIMIT = 10_000


@dataclass
class SolverConfig:
    policy: StepsizePolicy
    beta: float = 1.96
    seed: int = 0
    averaging: AveragingMode = AveragingMode.CONVEX
    max_iterations: int = 100_000
    max_epochs: Optional[float] = None
    tolerance: Optional[float] = None
    max_seconds: Optional[float] = None
    log_every: int = 1000
    x0: Optional[np.ndarray] = None
    panel_size: int = 1000
    objective_sample_size: int = 1000

    def __post_init__(self):
        self.averaging = AveragingMode(self.averaging)
        if not 0.0 < self.beta < 2.0:
            raise ValidationError(f"Relaxation beta must lie in (0, 2), got {self.beta}")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")
        if self.max_epochs is not None and self.max_epochs <= 0:
            raise ValidationError("max_epochs must be positive")
        if self.tolerance is not None and self.tolerance <= 0:
            raise ValidationError("tolerance must be positive")
        if self.log_every < 1:
            raise ValidationError("log_every must be at least 1")
        if self.averaging == AveragingMode.STRONGLY_CONVEX and not hasattr(self.policy, 'k0'):
            raise ValidationError("Strongly convex averaging requires the switching stepsize policy")

    @property
    def k0(self):
        return getattr(self.policy, 'k0', 0)


@dataclass
class SspState:
    x: np.ndarray
    averaging: AveragingState
    k: int = 0
    v: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    alpha: Optional[float] = None
    objective_index: Optional[int] = None
    constraint_index: Optional[int] = None
    x_previous: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def initial(cls, problem: CompositeProblem, config: SolverConfig):
        x0 = np.zeros(problem.dimension) if config.x0 is None else np.asarray(config.x0, dtype=float)
        if x0.shape != (problem.dimension,):
            raise ValidationError(f"x0 has shape {x0.shape}, expected ({problem.dimension},)")
        return cls(
            x=project(problem.simple_set, x0),
            averaging=AveragingState(mode=config.averaging, k0=config.k0),
        )

    @property
    def reported_point(self):
        average = self.averaging.average
        return self.x if average is None else average


def gradient_mapping(sample, x, alpha):
    """S(x,ζ) = α⁻¹(x − prox_{αg}(x − α∇f(x,ζ)))."""
    return (x - sample.prox(x - alpha * sample.subgradient(x), alpha)) / alpha


def ssp_step(state: SspState, problem: CompositeProblem, policy: StepsizePolicy,
             beta: float, stream: RandomStream) -> SspState:
    k = state.k
    alpha = policy.alpha(k)
    objective_sample = sample_objective(problem, stream)
    constraint_sample = sample_constraint(problem, stream)

    x = state.x
    v = objective_sample.prox(x - alpha * objective_sample.subgradient(x), alpha)
    if constraint_sample is None:
        z = v
    else:
        value, gradient = constraint_sample.evaluate(v)
        z = polyak_step(v, max(value, 0.0), gradient, beta)
    x_next = project(problem.simple_set, z)

    if not np.all(np.isfinite(x_next)):
        raise IterateDivergedError(
            k, f"Iterate became non-finite at iteration {k} (alpha={alpha}, beta={beta})"
        )

    update_average(state.averaging, x_next, k + 1, policy.alpha(k + 1), policy.L)
    state.x_previous = x
    state.x = x_next
    state.v = v
    state.z = z
    state.alpha = alpha
    state.objective_index = objective_sample.index
    state.constraint_index = None if constraint_sample is None else constraint_sample.index
    state.k = k + 1
    return state


class TraceEvaluator:
    """
    Fixed evaluation panel for objective and feasibility estimates. Index
    samples are drawn once from the trace stream so every row of a run is
    measured on the same indices.
    """

    def __init__(self, problem: CompositeProblem, config: SolverConfig, stream: RandomStream):
        self.problem = problem
        objective = problem.objective
        self.objective_indices = None
        if objective.size > EXACT_EVALUATION_LIMIT:
            self.objective_indices = [
                stream.draw(objective.distribution) for _ in range(config.objective_sample_size)
            ]
        self.panel = None
        if problem.has_constraints:
            size = problem.constraints.size
            if size > EXACT_EVALUATION_LIMIT:
                self.panel = np.sort(stream.generator.choice(size, config.panel_size, replace=False))
            else:
                self.panel = np.arange(size)
        hint = problem.optimum_hint
        self.optimal_point = None if hint is None or hint.point is None else np.asarray(hint.point, dtype=float)

    def feasibility_residual(self, x):
        if self.panel is None:
            return 0.0
        return float(np.max(self.problem.constraints.violations(x, self.panel)))

    def objective_estimate(self, x):
        return self.problem.objective.expected_value(x, self.objective_indices)

    def distance_sq(self, x):
        if self.optimal_point is None:
            return None
        difference = x - self.optimal_point
        return float(difference @ difference)


def iterations_per_epoch(problem: CompositeProblem):
    return problem.samples_per_epoch / problem.samples_per_iteration


def ssp_run(problem: CompositeProblem, config: SolverConfig):
    """
    Run SSP until the stopping rule fires.

    Returns:
        (SolveReport, ConvergenceTrace); the report point is the weighted
        average in averaging modes, otherwise the last iterate
    """
    stream = RandomStream(config.seed)
    evaluator = TraceEvaluator(problem, config, stream.spawn(TRACE_STREAM_KEY))
    state = SspState.initial(problem, config)
    trace = ConvergenceTrace(SSP_TRACE_COLUMNS)

    per_epoch = iterations_per_epoch(problem)
    iteration_cap = config.max_iterations
    if config.max_epochs is not None:
        iteration_cap = min(iteration_cap, int(math.ceil(config.max_epochs * per_epoch)))

    logger.info(
        f"SSP start: problem={problem.name}, n={problem.dimension}, policy={config.policy!r}, "
        f"beta={config.beta}, seed={config.seed}, cap={iteration_cap}"
    )
    started = time.perf_counter()
    reason = TerminationReason.MAX_ITERATIONS
    previous_objective = None
    logged_at = -1

    def record():
        point = state.reported_point
        row = {
            'iter': state.k,
            'alpha': state.alpha,
            'obj_est': evaluator.objective_estimate(point),
            'feas_residual': evaluator.feasibility_residual(point),
            'dist_sq_opt': evaluator.distance_sq(point),
            'elapsed_ms': (time.perf_counter() - started) * 1000.0,
        }
        trace.append(**row)
        logger.debug(
            f"k={row['iter']} alpha={row['alpha']} obj={row['obj_est']} residual={row['feas_residual']}"
        )
        return row

    while state.k < iteration_cap:
        ssp_step(state, problem, config.policy, config.beta, stream)
        if state.k % config.log_every == 0:
            row = record()
            logged_at = state.k
            if config.tolerance is not None and _tolerance_met(row, previous_objective, config.tolerance):
                reason = TerminationReason.TOLERANCE
                break
            previous_objective = row['obj_est']
        if config.max_seconds is not None and time.perf_counter() - started > config.max_seconds:
            reason = TerminationReason.MAX_TIME
            break

    if logged_at != state.k:
        record()
    final = trace.final_row
    elapsed = time.perf_counter() - started
    report = SolveReport(
        point=state.reported_point.copy(),
        iterations=state.k,
        epochs=state.k / per_epoch,
        objective=final['obj_est'],
        feasibility_residual=final['feas_residual'],
        reason=reason,
        elapsed_seconds=elapsed,
        extras={'dist_sq_opt': final['dist_sq_opt']},
    )
    logger.info(
        f"SSP stop: {reason.value} after {state.k} iterations, "
        f"residual={report.feasibility_residual}, obj={report.objective}"
    )
    return report, trace


def _tolerance_met(row, previous_objective, tolerance):
    if row['feas_residual'] > tolerance:
        return False
    current = row['obj_est']
    if current is None:
        return True
    if previous_objective is None:
        return False
    return abs(current - previous_objective) <= tolerance * max(1.0, abs(previous_objective))

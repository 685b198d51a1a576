"""
Experiment configuration and the service that builds, runs and reports one
experiment per problem kind.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from celery import group
from django.conf import settings
from django.core.exceptions import ValidationError

from builders.datasets import CovarianceMode, covariance_from_data, train_test_split
from builders.least_squares import build_constrained_ls, build_lp_feasibility, build_sparse_svm_lp, split_lp_solution
from builders.robust_svm import build_robust_svm, count_errors
from geometry.sets import simple_set_from_name
from solvers.averaging import AveragingMode
from solvers.linear import (
    LsConfig,
    kappa_block,
    simplified_contraction,
    ssp_ls_run,
    theoretical_contraction,
)
from solvers.reports import format_value
from solvers.ssp import SolverConfig, ssp_run
from solvers.stepsizes import (
    Constant,
    SwitchingStronglyConvex,
    feasibility_rate_constant,
    linear_rate_factor,
    policy_from_options,
    stepsize_upper_bound_convex,
)
from .readers import ONE_TWO_LABELS, ZERO_ONE_LABELS, read_libsvm, read_matrix_market
from .tasks import run_bench_seed

logger = logging.getLogger(__name__)

# |w_j| above this counts as a nonzero weight
WEIGHT_TOLERANCE = 1e-6

LABEL_MAPS = {
    'pm1': None,
    '01': ZERO_ONE_LABELS,
    '12': ONE_TWO_LABELS,
}


class ProblemKind(str, Enum):
    LS = 'ls'
    LP = 'lp'
    SVM = 'svm'
    ROBUST_SVM = 'robust-svm'
    CUSTOM_FEASIBILITY = 'custom-feasibility'
    BENCH = 'bench'


# CLI subcommand name -> problem kind
SUBCOMMANDS = {
    'ls': ProblemKind.LS,
    'lp': ProblemKind.LP,
    'svm': ProblemKind.SVM,
    'robust-svm': ProblemKind.ROBUST_SVM,
    'feasibility': ProblemKind.CUSTOM_FEASIBILITY,
    'bench': ProblemKind.BENCH,
}

REQUIRED_PATHS = {
    ProblemKind.LS: ('A', 'b'),
    ProblemKind.LP: ('c', 'C', 'd'),
    ProblemKind.SVM: ('data',),
    ProblemKind.ROBUST_SVM: ('data',),
    ProblemKind.CUSTOM_FEASIBILITY: ('A', 'b'),
    ProblemKind.BENCH: (),
}


@dataclass
class ExperimentConfig:
    """
    One experiment. Unset solver parameters fall back to settings.SSP_DEFAULTS.
    """
    kind: ProblemKind
    A: Optional[str] = None
    b: Optional[str] = None
    C: Optional[str] = None
    d: Optional[str] = None
    c: Optional[str] = None
    data: Optional[str] = None
    y: str = 'free'
    delta: Optional[float] = None
    beta: Optional[float] = None
    alpha0: Optional[float] = None
    gamma: Optional[float] = None
    mu: Optional[float] = None
    L: Optional[float] = None
    policy: str = 'poly'
    averaging: Optional[str] = None
    seed: Optional[int] = None
    tolerance: Optional[float] = None
    max_epochs: Optional[int] = None
    max_iterations: Optional[int] = None
    log_every: Optional[int] = None
    block_size: int = 1
    lam: Optional[float] = None
    rho: Optional[float] = None
    cov_mode: str = CovarianceMode.DEPENDENT.value
    labels: str = 'pm1'
    train_fraction: Optional[float] = None
    regularity: Optional[float] = None
    trace: Optional[str] = None
    report: Optional[str] = None
    # bench only
    m: int = 100
    p: int = 100
    n: int = 50
    seeds: int = 10
    relaxations: tuple = (0.96, 1.96)
    trace_dir: Optional[str] = None

    def __post_init__(self):
        self.kind = ProblemKind(self.kind)
        defaults = settings.SSP_DEFAULTS
        robust = self.kind == ProblemKind.ROBUST_SVM
        fallbacks = {
            'delta': defaults['DELTA'],
            'beta': defaults['BETA'],
            'gamma': defaults['GAMMA'],
            'seed': defaults['SEED'],
            'tolerance': defaults['SVM_TOLERANCE'] if robust else defaults['LS_TOLERANCE'],
            'max_epochs': defaults['MAX_EPOCHS'],
            'max_iterations': defaults['MAX_ITERATIONS'],
            'log_every': defaults['LOG_EVERY'],
            'lam': defaults['LAMBDA'],
            'rho': defaults['RHO'],
            'train_fraction': defaults['TRAIN_FRACTION'],
            'trace_dir': defaults['TRACE_DIR'],
        }
        for name, value in fallbacks.items():
            if getattr(self, name) is None:
                setattr(self, name, value)
        self.relaxations = tuple(float(value) for value in self.relaxations)

    @classmethod
    def from_options(cls, subcommand, options):
        """Build from parsed command options, ignoring Django's own keys."""
        if subcommand not in SUBCOMMANDS:
            raise ValidationError(f"Unknown subcommand '{subcommand}'")
        names = set(cls.__dataclass_fields__) - {'kind'}
        values = {name: options[name] for name in names if options.get(name) is not None}
        return cls(kind=SUBCOMMANDS[subcommand], **values)

    def validate(self):
        """Range checks and input-path existence; raises ValidationError."""
        for name in ('delta', 'beta'):
            value = getattr(self, name)
            if not 0.0 < value < 2.0:
                raise ValidationError(f"{name} must lie in (0, 2), got {value}")
        if self.tolerance <= 0:
            raise ValidationError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_epochs < 1 or self.max_iterations < 1 or self.log_every < 1:
            raise ValidationError("max-epochs, max-iterations and log-every must be at least 1")
        if self.block_size < 1:
            raise ValidationError(f"block-size must be at least 1, got {self.block_size}")
        if self.lam <= 0:
            raise ValidationError(f"lambda must be positive, got {self.lam}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValidationError(f"rho must lie in [0, 1], got {self.rho}")
        if self.labels not in LABEL_MAPS:
            raise ValidationError(f"Unknown label mapping '{self.labels}'")
        if self.cov_mode not in {mode.value for mode in CovarianceMode}:
            raise ValidationError(f"Unknown covariance mode '{self.cov_mode}'")
        if self.averaging is not None and self.averaging not in {mode.value for mode in AveragingMode}:
            raise ValidationError(f"Unknown averaging mode '{self.averaging}'")
        if self.regularity is not None and self.regularity <= 0:
            raise ValidationError("The regularity constant must be positive")
        if (self.C is None) != (self.d is None) and self.kind != ProblemKind.LP:
            raise ValidationError("--C and --d must be given together")
        if self.kind == ProblemKind.BENCH:
            if min(self.m, self.p) < 0 or self.n < 1 or self.seeds < 1:
                raise ValidationError("Bench sizes must be positive")
            for value in self.relaxations:
                if not 0.0 < value < 2.0:
                    raise ValidationError(f"Relaxation {value} must lie in (0, 2)")

        for name in REQUIRED_PATHS[self.kind]:
            if getattr(self, name) is None:
                raise ValidationError(f"--{name} is required for {self.kind.value}")
        for name in ('A', 'b', 'C', 'd', 'c', 'data'):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise ValidationError(f"Input file for --{name} does not exist: {path}")

    @property
    def averaging_mode(self):
        if self.averaging is not None:
            return AveragingMode(self.averaging)
        if self.policy == SwitchingStronglyConvex.name:
            return AveragingMode.STRONGLY_CONVEX
        return AveragingMode.CONVEX

    def default_trace_path(self):
        return Path(self.trace_dir) / f"{self.kind.value}_seed{self.seed}.csv"


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    summary: dict
    report: object = None
    trace: object = None
    trace_path: Optional[Path] = None
    runs: list = field(default_factory=list)

    @property
    def status(self):
        return self.summary.get('status')

    @property
    def converged(self):
        return self.status == 'converged'

    def report_text(self):
        """`key = value` lines, floats in round-trip precision."""
        return ''.join(f"{key} = {format_value(value)}\n" for key, value in self.summary.items())


def _matrix(path):
    matrix = read_matrix_market(path)
    if not sp.issparse(matrix) and matrix.ndim == 1:
        return matrix[:, np.newaxis]
    return matrix


def _vector(path):
    values = read_matrix_market(path)
    if sp.issparse(values):
        values = values.toarray()
    return np.asarray(values, dtype=float).ravel()


class ExperimentService:
    """Builds problems from files, runs the matching solver and emits results"""

    @staticmethod
    def run(config: ExperimentConfig):
        """
        Validate, dispatch on the problem kind, then write the trace and report.

        Returns:
            ExperimentResult
        """
        config.validate()
        runners = {
            ProblemKind.LS: ExperimentService.run_ls,
            ProblemKind.LP: ExperimentService.run_lp,
            ProblemKind.SVM: ExperimentService.run_svm,
            ProblemKind.ROBUST_SVM: ExperimentService.run_robust_svm,
            ProblemKind.CUSTOM_FEASIBILITY: ExperimentService.run_feasibility,
            ProblemKind.BENCH: ExperimentService.run_bench,
        }
        result = runners[config.kind](config)

        if result.trace is not None:
            result.trace_path = result.trace.to_csv(config.trace or config.default_trace_path())
            logger.info(f"Trace written to {result.trace_path}")
        if config.report:
            path = Path(config.report)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(result.report_text())
            logger.info(f"Report written to {path}")
        return result

    @staticmethod
    def _ls_config(config):
        return LsConfig(
            delta=config.delta,
            beta=config.beta,
            tolerance=config.tolerance,
            max_epochs=config.max_epochs,
            seed=config.seed,
            block_size=config.block_size,
        )

    @staticmethod
    def _load_linear_system(config, name):
        C = _matrix(config.C) if config.C else None
        d = _vector(config.d) if config.d else None
        return build_constrained_ls(
            _matrix(config.A), _vector(config.b), C, d,
            simple_set=simple_set_from_name(config.y),
            block_size=config.block_size,
            name=name,
        )

    @staticmethod
    def _base_summary(report):
        return {
            'status': report.reason.status,
            'epochs': report.epochs,
            'iterations': report.iterations,
            'eq_residual': report.extras.get('eq_residual'),
            'ineq_residual': report.extras.get('ineq_residual'),
            'obj_est': report.objective,
        }

    @staticmethod
    def run_ls(config):
        problem = ExperimentService._load_linear_system(config, 'ls')
        ExperimentService.log_ls_diagnostics(problem, config)
        report, trace = ssp_ls_run(problem, ExperimentService._ls_config(config))
        return ExperimentResult(config, ExperimentService._base_summary(report), report, trace)

    @staticmethod
    def run_lp(config):
        """Primal-dual feasibility of min cᵀz s.t. Cz ≤ d, z ≥ 0."""
        c = _vector(config.c)
        C = _matrix(config.C)
        d = _vector(config.d)
        problem = build_lp_feasibility(c, C, d)
        report, trace = ssp_ls_run(problem, ExperimentService._ls_config(config))

        z, nu = split_lp_solution(report.point, c.size)
        summary = ExperimentService._base_summary(report)
        summary['lp_objective'] = float(c @ z)
        summary['duality_gap'] = float(c @ z + d @ nu)
        return ExperimentResult(config, summary, report, trace)

    @staticmethod
    def _load_split(config):
        dataset = read_libsvm(config.data, label_map=LABEL_MAPS[config.labels])
        train, test = train_test_split(dataset, config.train_fraction, seed=config.seed)
        logger.info(
            f"Loaded {dataset.num_examples} examples with {dataset.num_features} features; "
            f"{train.num_examples} train, {test.num_examples} test"
        )
        return train, test

    @staticmethod
    def _classification_summary(summary, train, test, w, d, ellipsoids):
        summary['nnz_w'] = int(np.count_nonzero(np.abs(w) > WEIGHT_TOLERANCE))
        for split, data in (('train', train), ('test', test)):
            counts = count_errors(data, w, d, ellipsoids)
            summary[f'ordinary_errors_{split}'] = counts.ordinary
            summary[f'worst_case_errors_{split}'] = counts.worst_case
        return summary

    @staticmethod
    def run_svm(config):
        """Sparse linear SVM solved as an LP with SSP-LS."""
        train, test = ExperimentService._load_split(config)
        problem, encoding = build_sparse_svm_lp(train, config.lam)
        report, trace = ssp_ls_run(problem, ExperimentService._ls_config(config))

        z, _ = split_lp_solution(report.point, encoding.num_variables)
        w, d, u = encoding.decode(z)
        try:
            ellipsoids = covariance_from_data(train, config.cov_mode, config.rho)
        except ValidationError as exc:
            logger.warning(f"Worst-case errors fall back to ordinary errors: {exc.messages[0]}")
            ellipsoids = None

        summary = ExperimentService._base_summary(report)
        summary['svm_objective'] = config.lam * float(np.sum(u)) + float(np.sum(np.abs(w)))
        summary['bias'] = d
        ExperimentService._classification_summary(summary, train, test, w, d, ellipsoids)
        return ExperimentResult(config, summary, report, trace)

    @staticmethod
    def _solver_config(config, constants):
        L = constants.L if config.L is None else config.L
        mu = config.mu if config.mu is not None else (constants.mu or None)
        policy = policy_from_options(config.policy, L=L, mu=mu, alpha0=config.alpha0, gamma=config.gamma)
        return SolverConfig(
            policy=policy,
            beta=config.beta,
            seed=config.seed,
            averaging=config.averaging_mode,
            max_iterations=config.max_iterations,
            max_epochs=config.max_epochs,
            tolerance=config.tolerance,
            log_every=config.log_every,
            panel_size=settings.SSP_DEFAULTS['PANEL_SIZE'],
        )

    @staticmethod
    def run_robust_svm(config):
        """Robust (or, with ρ = 0, nominal) sparse SVM solved with SSP."""
        train, test = ExperimentService._load_split(config)
        ellipsoids = covariance_from_data(train, config.cov_mode, config.rho)
        problem = build_robust_svm(train, config.lam, ellipsoids)
        solver_config = ExperimentService._solver_config(config, problem.constants)
        ExperimentService.log_ssp_diagnostics(problem, solver_config, config)
        report, trace = ssp_run(problem, solver_config)

        w, d, _ = problem.metadata['layout'].split(report.point)
        violations = np.maximum(problem.constraints.all_values(report.point), 0.0)
        summary = ExperimentService._base_summary(report)
        summary['eq_residual'] = 0.0
        summary['ineq_residual'] = float(np.linalg.norm(violations))
        summary['feas_residual'] = report.feasibility_residual
        summary['bias'] = d
        ExperimentService._classification_summary(summary, train, test, w, d, ellipsoids)
        return ExperimentResult(config, summary, report, trace)

    @staticmethod
    def run_feasibility(config):
        """A Matrix Market linear system driven through the general SSP solver."""
        system = ExperimentService._load_linear_system(config, 'feasibility')
        problem = system.as_composite()
        solver_config = ExperimentService._solver_config(config, problem.constants)
        ExperimentService.log_ssp_diagnostics(problem, solver_config, config)
        report, trace = ssp_run(problem, solver_config)

        summary = ExperimentService._base_summary(report)
        summary['eq_residual'] = system.eq_residual(report.point)
        summary['ineq_residual'] = system.ineq_residual(report.point)
        summary['feas_residual'] = report.feasibility_residual
        return ExperimentResult(config, summary, report, trace)

    @staticmethod
    def run_bench(config):
        """
        One Celery task per (seed, relaxation) on planted systems. Each run
        writes its own trace file under trace_dir.
        """
        trace_dir = Path(config.trace_dir)
        trace_dir.mkdir(parents=True, exist_ok=True)
        seeds = range(config.seed, config.seed + config.seeds)
        job = group(
            run_bench_seed.s(
                config.m, config.p, config.n, seed, relaxation, config.tolerance, config.max_epochs,
                str(trace_dir / f"bench_seed{seed}_relax{relaxation}.csv"),
            )
            for seed in seeds
            for relaxation in config.relaxations
        )
        runs = job.apply_async().get()

        failed = [run for run in runs if run['status'] == 'error']
        for run in failed:
            logger.error(f"Bench run failed: seed {run['seed']} relaxation {run['relaxation']}: {run['message']}")
        finished = [run for run in runs if run['status'] != 'error']
        summary = {
            'status': 'converged' if not failed and all(run['status'] == 'converged' for run in finished) else 'max_epochs',
            'runs': len(runs),
            'converged_runs': sum(run['status'] == 'converged' for run in finished),
            'failed_runs': len(failed),
        }
        epochs = {}
        for relaxation in config.relaxations:
            values = [run['epochs'] for run in finished if run['relaxation'] == relaxation]
            epochs[relaxation] = {run['seed']: run['epochs'] for run in finished if run['relaxation'] == relaxation}
            summary[f'mean_epochs_{relaxation}'] = float(np.mean(values)) if values else None

        if len(config.relaxations) == 2:
            low, high = sorted(config.relaxations)
            paired = [seed for seed in seeds if seed in epochs[low] and seed in epochs[high]]
            summary[f'seeds_{high}_not_slower'] = sum(epochs[high][seed] <= epochs[low][seed] for seed in paired)
            summary['paired_seeds'] = len(paired)
        summary['peak_rss_mb'] = max((run['rss_mb'] for run in finished), default=None)
        logger.info(f"Bench finished: {summary['converged_runs']}/{len(runs)} runs converged")
        return ExperimentResult(config, summary, runs=runs)

    @staticmethod
    def log_ls_diagnostics(problem, config):
        """κ_block and, with a regularity constant, the predicted contraction."""
        if not problem.blocks:
            return
        try:
            kappa = kappa_block(problem.blocks)
            logger.info(f"kappa_block = {kappa:.6g}, L = {problem.constants.L:.6g}")
            if config.regularity is not None:
                factor = theoretical_contraction(config.delta, config.beta, kappa, config.regularity)
                simple = simplified_contraction(config.regularity, kappa if problem.block_size > 1 else None)
                logger.info(f"Predicted contraction per iteration: {factor:.6g} (simplified regime {simple:.6g})")
        except ValidationError as exc:
            logger.warning(f"Rate diagnostics unavailable: {exc.messages[0]}")

    @staticmethod
    def log_ssp_diagnostics(problem, solver_config, config):
        constants = problem.constants
        policy = solver_config.policy
        logger.info(
            f"Stepsize policy {policy!r}; convex stepsize bound {stepsize_upper_bound_convex(policy.L):.6g}"
        )
        try:
            if config.regularity is not None and problem.has_constraints:
                scale = feasibility_rate_constant(config.beta, config.regularity, constants.B_h)
                logger.info(f"Feasibility-to-distance constant: {scale:.6g}")
            if isinstance(policy, Constant) and policy.mu:
                logger.info(f"Linear rate factor per iteration: {linear_rate_factor(policy.value, policy.mu):.6g}")
        except ValidationError as exc:
            logger.warning(f"Rate diagnostics unavailable: {exc.messages[0]}")

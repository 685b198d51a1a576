"""
Celery tasks for multi-seed benchmark sweeps
"""
from celery import shared_task
import logging

import psutil

from builders.least_squares import build_constrained_ls
from builders.synthetic import planted_linear_system
from solvers.linear import LsConfig, ssp_ls_run

logger = logging.getLogger(__name__)


def current_rss_mb():
    """Resident set size of this process in MB."""
    return psutil.Process().memory_info().rss / (1024 * 1024)


@shared_task(bind=True)
def run_bench_seed(self, m, p, n, seed, relaxation, tolerance, max_epochs, trace_path=None):
    """
    Solve one planted linear system with δ = β = relaxation.

    Args:
        m, p, n: equality rows, inequality rows, unknowns
        seed: seeds both the planted system and the sampler
        relaxation: used for both δ and β
        tolerance: residual target
        max_epochs: epoch budget
        trace_path: where to write this run's trace CSV, if anywhere

    Returns:
        dict: status, epochs and the peak RSS seen by this task
    """
    try:
        system = planted_linear_system(m, p, n, seed=seed)
        problem = build_constrained_ls(
            system['A'], system['b'], system['C'], system['d'], name=f'bench-{seed}'
        )
        config = LsConfig(
            delta=relaxation, beta=relaxation, tolerance=tolerance,
            max_epochs=max_epochs, seed=seed,
        )
        report, trace = ssp_ls_run(problem, config)
        if trace_path:
            trace.to_csv(trace_path)

        logger.info(
            f"Bench seed {seed} relaxation {relaxation}: {report.reason.status} after {report.epochs} epochs"
        )
        return {
            'status': report.reason.status,
            'seed': seed,
            'relaxation': relaxation,
            'epochs': report.epochs,
            'eq_residual': report.extras['eq_residual'],
            'ineq_residual': report.extras['ineq_residual'],
            'trace': trace_path,
            'rss_mb': current_rss_mb(),
        }

    except Exception as exc:
        logger.error(f"Bench seed {seed} relaxation {relaxation} failed: {str(exc)}")
        return {
            'status': 'error',
            'seed': seed,
            'relaxation': relaxation,
            'message': str(exc),
        }

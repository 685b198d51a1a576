"""
Management command to run one SSP / SSP-LS experiment or a benchmark sweep
"""
import logging

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from builders.datasets import CovarianceMode
from harness.experiment import ExperimentConfig, ExperimentService
from problems.exceptions import InconsistentOracleError, IterateDivergedError
from solvers.averaging import AveragingMode

logger = logging.getLogger(__name__)

CONFIG_ERROR = 1
NOT_CONVERGED = 2


def _add_run_arguments(parser):
    parser.add_argument('--seed', type=int, help='Sampler seed (default SSP_SEED)')
    parser.add_argument('--tol', dest='tolerance', type=float, help='Stopping tolerance')
    parser.add_argument('--max-epochs', type=int, help='Epoch budget')
    parser.add_argument('--trace', help='Trace CSV path (default under SSP_TRACE_DIR)')
    parser.add_argument('--report', help='Write the key = value report here')
    parser.add_argument('--log-every', type=int, help='Iterations between trace rows (SSP only)')
    parser.add_argument('--reg-c', dest='regularity', type=float,
                        help='Regularity constant c for the rate diagnostics')


def _add_system_arguments(parser, required=True):
    parser.add_argument('--A', required=required, help='Equality matrix (Matrix Market)')
    parser.add_argument('--b', required=required, help='Equality right-hand side (Matrix Market)')
    parser.add_argument('--C', help='Inequality matrix (Matrix Market)')
    parser.add_argument('--d', help='Inequality right-hand side (Matrix Market)')
    parser.add_argument('--y', choices=['free', 'nonneg'], help='Simple set Y')


def _add_relaxation_arguments(parser, delta=True):
    if delta:
        parser.add_argument('--delta', type=float, help='Equality relaxation in (0, 2)')
        parser.add_argument('--block-size', type=int, help='Rows per equality block')
    parser.add_argument('--beta', type=float, help='Inequality relaxation in (0, 2)')


def _add_policy_arguments(parser):
    parser.add_argument('--policy', choices=['poly', 'switch', 'const'], help='Stepsize policy')
    parser.add_argument('--alpha0', type=float, help='Initial (or constant) stepsize')
    parser.add_argument('--gamma', type=float, help='Polynomial decay exponent in [0, 1)')
    parser.add_argument('--mu', type=float, help='Strong convexity modulus')
    parser.add_argument('--L', type=float, help='Gradient growth constant')
    parser.add_argument('--averaging', choices=[mode.value for mode in AveragingMode],
                        help='Reported point: weighted average or last iterate')
    parser.add_argument('--max-iterations', type=int, help='Iteration budget')


def _add_data_arguments(parser):
    parser.add_argument('--data', required=True, help='LIBSVM dataset')
    parser.add_argument('--lambda', dest='lam', type=float, help='Hinge-loss weight')
    parser.add_argument('--rho', type=float, help='Noise level in [0, 1]')
    parser.add_argument('--cov-mode', choices=[mode.value for mode in CovarianceMode],
                        help='Class-dependent or pooled covariance')
    parser.add_argument('--labels', choices=['pm1', '01', '12'], help='Label encoding of the file')
    parser.add_argument('--train-fraction', type=float, help='Share of rows used for training')


class Command(BaseCommand):
    help = 'Run the stochastic subgradient projection solvers on one problem or a benchmark sweep'

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest='kind', required=True, metavar='subcommand')

        ls = subparsers.add_parser('ls', help='Linear system Ax = b, Cx ≤ d with SSP-LS')
        _add_system_arguments(ls)
        _add_relaxation_arguments(ls)
        _add_run_arguments(ls)

        lp = subparsers.add_parser('lp', help='LP min cᵀz s.t. Cz ≤ d, z ≥ 0 via primal-dual feasibility')
        lp.add_argument('--c', required=True, help='Cost vector (Matrix Market)')
        lp.add_argument('--C', required=True, help='Constraint matrix (Matrix Market)')
        lp.add_argument('--d', required=True, help='Constraint right-hand side (Matrix Market)')
        _add_relaxation_arguments(lp)
        _add_run_arguments(lp)

        svm = subparsers.add_parser('svm', help='Sparse linear SVM as an LP with SSP-LS')
        _add_data_arguments(svm)
        _add_relaxation_arguments(svm)
        _add_run_arguments(svm)

        robust = subparsers.add_parser('robust-svm', help='Robust sparse SVM with SSP')
        _add_data_arguments(robust)
        _add_relaxation_arguments(robust, delta=False)
        _add_policy_arguments(robust)
        _add_run_arguments(robust)

        feasibility = subparsers.add_parser('feasibility', help='Linear system through the general SSP solver')
        _add_system_arguments(feasibility)
        _add_relaxation_arguments(feasibility, delta=False)
        _add_policy_arguments(feasibility)
        _add_run_arguments(feasibility)

        bench = subparsers.add_parser('bench', help='Multi-seed SSP-LS sweep on planted systems')
        bench.add_argument('--m', type=int, help='Equality rows')
        bench.add_argument('--p', type=int, help='Inequality rows')
        bench.add_argument('--n', type=int, help='Unknowns')
        bench.add_argument('--seeds', type=int, help='Number of seeds, starting at --seed')
        bench.add_argument('--relaxations', type=float, nargs='+', help='Values used for both δ and β')
        bench.add_argument('--trace-dir', help='Directory for the per-run trace files')
        bench.add_argument('--seed', type=int, help='First seed')
        bench.add_argument('--tol', dest='tolerance', type=float, help='Stopping tolerance')
        bench.add_argument('--max-epochs', type=int, help='Epoch budget per run')
        bench.add_argument('--report', help='Write the key = value report here')

    def handle(self, *args, **options):
        kind = options['kind']
        try:
            config = ExperimentConfig.from_options(kind, options)
            result = ExperimentService.run(config)
        except ValidationError as exc:
            raise CommandError('; '.join(exc.messages), returncode=CONFIG_ERROR)
        except (InconsistentOracleError, IterateDivergedError) as exc:
            logger.error(f"{kind} run aborted: {exc}")
            raise CommandError(str(exc), returncode=CONFIG_ERROR)

        self.stdout.write(result.report_text(), ending='')
        if not result.converged:
            raise CommandError(f'{kind} stopped without meeting the tolerance: {result.status}',
                               returncode=NOT_CONVERGED)
        self.stdout.write(self.style.SUCCESS(f'{kind} converged'))

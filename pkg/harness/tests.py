"""
Tests for experiment configuration, the `ssp` command and the bench task.
"""
import csv
import io
import tempfile
from pathlib import Path

from django.conf import settings
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from builders.synthetic import planted_linear_system, random_bounded_lp, separable_toy
from harness.cli import cli_main
from harness.experiment import ExperimentConfig, ExperimentResult, ProblemKind
from harness.readers import write_libsvm, write_matrix_market
from harness.tasks import run_bench_seed
from oracles.reference import oracle_small_lp
from solvers.averaging import AveragingMode


def parse_report(text):
    """`key = value` lines into a dict of strings."""
    values = {}
    for line in text.splitlines():
        if ' = ' in line:
            key, value = line.split(' = ', 1)
            values[key] = value
    return values


class CommandTestCase(SimpleTestCase):
    """Scratch directory plus helpers for invoking the CLI"""

    def setUp(self):
        self._directory = tempfile.TemporaryDirectory()
        self.root = Path(self._directory.name)

    def tearDown(self):
        self._directory.cleanup()

    def run_cli(self, *argv):
        stdout, stderr = io.StringIO(), io.StringIO()
        code = cli_main([str(value) for value in argv], stdout=stdout, stderr=stderr)
        return code, stdout.getvalue(), stderr.getvalue()

    def write_system(self, m=30, p=15, n=8, seed=0):
        system = planted_linear_system(m, p, n, seed=seed)
        paths = {}
        for key in ('A', 'b', 'C', 'd'):
            paths[key] = write_matrix_market(self.root / f'{key}.mtx', system[key])
        return paths

    def system_flags(self, paths):
        return ['--A', paths['A'], '--b', paths['b'], '--C', paths['C'], '--d', paths['d']]


class ExperimentConfigTest(CommandTestCase):
    """Defaults and validation"""

    def test_defaults_come_from_settings(self):
        """Unset values take settings.SSP_DEFAULTS; SVM runs use the looser tolerance"""
        defaults = settings.SSP_DEFAULTS
        config = ExperimentConfig(kind='ls')
        self.assertEqual(config.kind, ProblemKind.LS)
        self.assertEqual(config.delta, defaults['DELTA'])
        self.assertEqual(config.beta, defaults['BETA'])
        self.assertEqual(config.tolerance, defaults['LS_TOLERANCE'])
        self.assertEqual(config.seed, defaults['SEED'])
        self.assertEqual(ExperimentConfig(kind='robust-svm').tolerance, defaults['SVM_TOLERANCE'])
        self.assertEqual(ExperimentConfig(kind='ls', tolerance=0.5).tolerance, 0.5)

    def test_averaging_follows_policy(self):
        """Switching stepsizes average with (k+1)² weights"""
        self.assertEqual(ExperimentConfig(kind='custom-feasibility').averaging_mode, AveragingMode.CONVEX)
        self.assertEqual(ExperimentConfig(kind='robust-svm', policy='switch').averaging_mode,
                         AveragingMode.STRONGLY_CONVEX)
        self.assertEqual(ExperimentConfig(kind='robust-svm', averaging='last').averaging_mode,
                         AveragingMode.LAST)

    def test_from_options(self):
        """Subcommand names map to kinds and None options are dropped"""
        config = ExperimentConfig.from_options(
            'feasibility', {'A': 'a.mtx', 'beta': 1.5, 'delta': None, 'verbosity': 1, 'kind': 'feasibility'}
        )
        self.assertEqual(config.kind, ProblemKind.CUSTOM_FEASIBILITY)
        self.assertEqual(config.beta, 1.5)
        self.assertEqual(config.A, 'a.mtx')
        with self.assertRaises(ValidationError):
            ExperimentConfig.from_options('qp', {})

    def test_validation(self):
        """Out-of-range values and missing inputs"""
        paths = self.write_system()
        valid = {'A': str(paths['A']), 'b': str(paths['b'])}
        ExperimentConfig(kind='ls', **valid).validate()
        cases = [
            {'delta': 2.0},
            {'beta': 0.0},
            {'tolerance': -1e-3},
            {'block_size': 0},
            {'rho': 1.5},
            {'lam': 0.0},
            {'labels': 'yn'},
            {'cov_mode': 'full'},
            {'C': str(paths['C'])},
            {'b': str(self.root / 'missing.mtx')},
        ]
        for overrides in cases:
            with self.subTest(overrides=overrides):
                with self.assertRaises(ValidationError):
                    ExperimentConfig(kind='ls', **{**valid, **overrides}).validate()
        with self.assertRaises(ValidationError):
            ExperimentConfig(kind='lp', c=str(paths['b'])).validate()
        with self.assertRaises(ValidationError):
            ExperimentConfig(kind='bench', relaxations=(0.5, 2.5)).validate()

    def test_report_text(self):
        """Floats are written in round-trip form, missing values empty"""
        result = ExperimentResult(ExperimentConfig(kind='ls'), {'status': 'converged', 'epochs': 3,
                                                                'eq_residual': 1 / 3, 'obj_est': None})
        self.assertEqual(result.report_text(), f'status = converged\nepochs = 3\neq_residual = {1 / 3!r}\nobj_est = \n')
        self.assertTrue(result.converged)


class LinearCommandTest(CommandTestCase):
    """ls and lp subcommands"""

    def test_ls_converges(self):
        """Exit 0 with a report file and an epoch trace"""
        paths = self.write_system()
        trace, report = self.root / 'trace.csv', self.root / 'out' / 'report.txt'
        code, stdout, _ = self.run_cli(
            'ls', *self.system_flags(paths), '--delta', 1.0, '--beta', 1.0,
            '--trace', trace, '--report', report,
        )
        self.assertEqual(code, 0)
        values = parse_report(report.read_text())
        self.assertEqual(values['status'], 'converged')
        self.assertLessEqual(float(values['eq_residual']), 1e-3)
        self.assertLessEqual(float(values['ineq_residual']), 1e-3)
        self.assertIn('status = converged', stdout)
        with open(trace) as handle:
            rows = list(csv.DictReader(handle))
        self.assertEqual(list(rows[0]), ['epoch', 'eq_residual', 'ineq_residual', 'elapsed_ms'])
        self.assertEqual(rows[0]['epoch'], '0')
        self.assertEqual(rows[-1]['epoch'], values['epochs'])

    def test_budget_exhausted_exits_two(self):
        """An unreachable tolerance stops at max-epochs with exit 2"""
        paths = self.write_system()
        code, stdout, stderr = self.run_cli(
            'ls', *self.system_flags(paths), '--tol', 1e-14, '--max-epochs', 2, '--trace', self.root / 't.csv',
        )
        self.assertEqual(code, 2)
        self.assertIn('status = max_epochs', stdout)
        self.assertNotIn('usage', stderr)

    def test_parse_errors_exit_one(self):
        """Missing required flags, unknown flags and bad values print usage"""
        paths = self.write_system()
        for argv in (
            ['ls', '--A', paths['A']],
            ['ls', *self.system_flags(paths), '--frobnicate', 1],
            ['ls', *self.system_flags(paths), '--delta', 'big'],
            ['qp'],
        ):
            code, _, stderr = self.run_cli(*argv)
            with self.subTest(argv=argv[:2]):
                self.assertEqual(code, 1)
                self.assertIn('usage', stderr)

    def test_configuration_errors_exit_one(self):
        """Out-of-range relaxation and malformed input files"""
        paths = self.write_system()
        code, _, stderr = self.run_cli('ls', *self.system_flags(paths), '--delta', 2.5, '--trace', self.root / 't.csv')
        self.assertEqual(code, 1)
        self.assertIn('delta', stderr)

        broken = self.root / 'broken.mtx'
        broken.write_text('%%MatrixMarket matrix array real general\n2 1\n1.0\n')
        code, _, stderr = self.run_cli('ls', '--A', paths['A'], '--b', broken, '--trace', self.root / 't.csv')
        self.assertEqual(code, 1)
        self.assertIn('line 3', stderr)

    def test_trace_is_deterministic(self):
        """Two runs with the same seed write identical traces apart from timing"""
        paths = self.write_system()
        traces = []
        for name in ('first.csv', 'second.csv'):
            path = self.root / name
            code, _, _ = self.run_cli('ls', *self.system_flags(paths), '--seed', 7, '--trace', path)
            self.assertEqual(code, 0)
            with open(path) as handle:
                traces.append([
                    {key: value for key, value in row.items() if key != 'elapsed_ms'}
                    for row in csv.DictReader(handle)
                ])
        self.assertEqual(traces[0], traces[1])

    def test_lp_objective(self):
        """The reported LP objective matches vertex enumeration"""
        c, C, d = random_bounded_lp(3, 3, seed=4)
        reference = oracle_small_lp(c, C, d)
        files = {
            'c': write_matrix_market(self.root / 'c.mtx', c),
            'C': write_matrix_market(self.root / 'C_lp.mtx', C),
            'd': write_matrix_market(self.root / 'd_lp.mtx', d),
        }
        report = self.root / 'lp.txt'
        code, _, _ = self.run_cli(
            'lp', '--c', files['c'], '--C', files['C'], '--d', files['d'],
            '--delta', 1.0, '--beta', 1.0, '--max-epochs', 100000,
            '--trace', self.root / 'lp.csv', '--report', report,
        )
        self.assertEqual(code, 0)
        values = parse_report(report.read_text())
        self.assertLessEqual(abs(float(values['lp_objective']) - reference.value), 1e-2)
        self.assertIn('duality_gap', values)


class ClassificationCommandTest(CommandTestCase):
    """svm and robust-svm subcommands"""

    def setUp(self):
        super().setUp()
        self.data = write_libsvm(self.root / 'toy.svm', separable_toy(6, seed=1))

    def test_svm_report(self):
        """The LP route reports objective, sparsity and both error counts"""
        report = self.root / 'svm.txt'
        code, _, _ = self.run_cli(
            'svm', '--data', self.data, '--lambda', 1.0, '--train-fraction', 0.75,
            '--max-epochs', 200, '--trace', self.root / 'svm.csv', '--report', report,
        )
        self.assertIn(code, (0, 2))
        values = parse_report(report.read_text())
        for key in ('status', 'svm_objective', 'bias', 'nnz_w', 'ordinary_errors_train',
                    'worst_case_errors_train', 'ordinary_errors_test', 'worst_case_errors_test'):
            self.assertIn(key, values)
        self.assertGreaterEqual(int(values['worst_case_errors_test']), int(values['ordinary_errors_test']))

    def test_robust_svm_report(self):
        """The SSP route reports residuals and error counts"""
        report = self.root / 'robust.txt'
        trace = self.root / 'robust.csv'
        code, _, _ = self.run_cli(
            'robust-svm', '--data', self.data, '--lambda', 1.0, '--rho', 0.3, '--train-fraction', 1.0,
            '--max-iterations', 5000, '--log-every', 500, '--trace', trace, '--report', report,
        )
        self.assertIn(code, (0, 2))
        values = parse_report(report.read_text())
        self.assertEqual(values['eq_residual'], '0.0')
        self.assertGreaterEqual(float(values['ineq_residual']), 0.0)
        self.assertEqual(values['ordinary_errors_test'], '0')
        with open(trace) as handle:
            header = handle.readline().strip()
        self.assertEqual(header, 'iter,alpha,obj_est,feas_residual,dist_sq_opt,elapsed_ms')

    def test_labels_must_match_encoding(self):
        """±1 files read with the 0/1 mapping fail with exit 1"""
        code, _, stderr = self.run_cli('svm', '--data', self.data, '--labels', '01', '--trace', self.root / 't.csv')
        self.assertEqual(code, 1)
        self.assertIn('line 7', stderr)


class FeasibilityCommandTest(CommandTestCase):
    """Linear systems through the general SSP solver"""

    def test_residuals_are_reported(self):
        """Equality and inequality residuals of the averaged point"""
        paths = self.write_system(m=20, p=10, n=5)
        report = self.root / 'feasibility.txt'
        code, _, _ = self.run_cli(
            'feasibility', *self.system_flags(paths), '--policy', 'poly', '--max-iterations', 4000,
            '--log-every', 400, '--trace', self.root / 'f.csv', '--report', report,
        )
        self.assertIn(code, (0, 2))
        values = parse_report(report.read_text())
        self.assertLessEqual(int(values['iterations']), 4000)
        self.assertGreaterEqual(float(values['eq_residual']), 0.0)
        self.assertIn('feas_residual', values)


class BenchTest(CommandTestCase):
    """Benchmark sweeps"""

    def test_task_result(self):
        """A single run reports status, epochs and memory"""
        result = run_bench_seed(20, 20, 5, 3, 1.0, 1e-3, 2000, str(self.root / 'one.csv'))
        self.assertEqual(result['status'], 'converged')
        self.assertEqual(result['seed'], 3)
        self.assertGreater(result['rss_mb'], 0.0)
        self.assertTrue((self.root / 'one.csv').is_file())

    def test_task_failure_is_reported(self):
        """Errors come back as a status dict and are logged"""
        with self.assertLogs('harness.tasks', level='ERROR'):
            result = run_bench_seed(0, 0, 5, 0, 1.0, 1e-3, 10)
        self.assertEqual(result['status'], 'error')
        self.assertIn('message', result)

    def test_sweep(self):
        """Seeds × relaxations runs, one trace file each"""
        report = self.root / 'bench.txt'
        trace_dir = self.root / 'bench'
        code, _, _ = self.run_cli(
            'bench', '--m', 20, '--p', 20, '--n', 5, '--seeds', 2, '--relaxations', 0.96, 1.96,
            '--max-epochs', 2000, '--trace-dir', trace_dir, '--report', report,
        )
        self.assertEqual(code, 0)
        values = parse_report(report.read_text())
        self.assertEqual(values['runs'], '4')
        self.assertEqual(values['converged_runs'], '4')
        self.assertEqual(values['failed_runs'], '0')
        self.assertEqual(values['paired_seeds'], '2')
        self.assertIn('mean_epochs_0.96', values)
        self.assertIn('seeds_1.96_not_slower', values)
        self.assertEqual(len(list(trace_dir.glob('bench_seed*_relax*.csv'))), 4)
        self.assertGreater(float(values['peak_rss_mb']), 0.0)

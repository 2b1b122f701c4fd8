import csv
import mock
import os
import tempfile
import unittest

import agesize.cli as cli
from agesize.core.exceptions import NoConvergence
from agesize.model import cycle
from agesize.model import spectral


def failing_report():
    return cycle.AssumptionReport([
        cycle.Check('A1', cycle.Status.PASS, 1.0, 1.0, ''),
        cycle.Check('A5', cycle.Status.FAIL, 1.1, 0.2, ''),
    ])


def read_csv(path):
    with open(path) as f:
        first = f.readline()
        return first, list(csv.reader(f))


class CliCase(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.out = self._tmp.name
        self.addCleanup(self._tmp.cleanup)

    def main(self, *argv):
        with mock.patch('builtins.print'):
            return cli.main(list(argv) + ['--out', self.out])

    def path(self, name):
        return os.path.join(self.out, name)


class TestParser(unittest.TestCase):

    def test_flags_become_overrides(self):
        args = cli.build_parser().parse_args(
            ['evolve', '--preset', 'affine-delta', '--grid', '32',
             '--t-end', '2.5', '--set', 'growth.kappa=2'])
        self.assertEqual(args.set, ['growth.kappa=2'])
        self.assertEqual(sorted(cli.flag_overrides(args)),
                         ['evolve.t_end=2.5', 'spectral.grid=32'])

    def test_abm_t_end_key(self):
        args = cli.build_parser().parse_args(['abm', '--t-end', '4'])
        self.assertEqual(cli.flag_overrides(args), ['abm.t_end=4.0'])

    def test_command_is_required(self):
        with mock.patch('sys.stderr'):
            with self.assertRaises(SystemExit):
                cli.build_parser().parse_args([])


class TestValidate(CliCase):

    def test_preset_validates(self):
        self.assertEqual(self.main('validate', '--preset', 'affine-delta'),
                         cli.EXIT_OK)
        first, rows = read_csv(self.path('validation.csv'))
        self.assertTrue(first.startswith('# config_hash='))
        self.assertEqual(rows[0],
                         ['assumption', 'status', 'worst_x', 'worst_value'])
        self.assertIn(['A1', 'pass'], [row[:2] for row in rows[1:]])

    def test_two_type_preset_validates(self):
        self.assertEqual(self.main('validate', '--preset', 'crescentus'),
                         cli.EXIT_OK)

    def test_failing_assumptions(self):
        with mock.patch.object(cycle, 'validate_assumptions',
                               return_value=failing_report()):
            self.assertEqual(self.main('validate', '--preset',
                                       'constant-delta'),
                             cli.EXIT_ASSUMPTION)
        self.assertTrue(os.path.exists(self.path('validation.csv')))

    def test_config_errors(self):
        self.assertEqual(self.main('validate', '--preset', 'crescentus',
                                   '--set', 'hetero.beta_major=1.2'),
                         cli.EXIT_CONFIG)
        self.assertEqual(self.main('validate', '--set', 'growth.kind=affine'),
                         cli.EXIT_CONFIG)
        self.assertEqual(self.main('validate', '--preset', 'affine-delta',
                                   '--threads', '0'),
                         cli.EXIT_CONFIG)

    def test_config_file(self):
        path = self.path('run.yaml')
        with open(path, 'w') as f:
            f.write("preset: constant-delta\n"
                    "growth:\n"
                    "  kappa: 2.0\n")
        self.assertEqual(self.main('validate', path), cli.EXIT_OK)


class TestSpectral(CliCase):

    def test_lambda_and_profiles(self):
        self.assertEqual(self.main('spectral', '--preset', 'constant-delta',
                                   '--grid', '32',
                                   '--set', 'spectral.levels=64'),
                         cli.EXIT_OK)
        with open(self.path('lambda.txt')) as f:
            values = [float(v) for v in f.read().split()]
        self.assertEqual(len(values), 4)
        self.assertAlmostEqual(values[0], 1.0, delta=1e-2)
        first, rows = read_csv(self.path('spectral.csv'))
        self.assertTrue(first.startswith('# config_hash='))
        self.assertEqual(rows[0], ['x_b', 'f_tilde', 'v_tilde'])
        self.assertEqual(len(rows), 33)
        _, rows = read_csv(self.path('eig2d.csv'))
        self.assertEqual(rows[0], ['x_b', 'a', 'f_i', 'v'])

    def test_two_type_is_rejected(self):
        self.assertEqual(self.main('spectral', '--preset', 'crescentus'),
                         cli.EXIT_CONFIG)

    def test_assumption_violation_stops_solver(self):
        with mock.patch.object(cycle, 'validate_assumptions',
                               return_value=failing_report()), \
                mock.patch.object(spectral, 'solve') as solve:
            self.assertEqual(self.main('spectral', '--preset',
                                       'constant-delta'),
                             cli.EXIT_ASSUMPTION)
        solve.assert_not_called()

    def test_numerical_failure(self):
        with mock.patch.object(spectral, 'solve',
                               side_effect=NoConvergence("stuck")):
            self.assertEqual(self.main('spectral', '--preset',
                                       'constant-delta', '--grid', '16'),
                             cli.EXIT_NUMERICAL)

    def test_unexpected_failure_aborts(self):
        with mock.patch.object(spectral, 'solve',
                               side_effect=RuntimeError("boom")):
            with mock.patch('agesize.core.pipeline.logger'):
                self.assertEqual(self.main('spectral', '--preset',
                                           'constant-delta', '--grid', '16'),
                                 cli.EXIT_NUMERICAL)


class TestEvolve(CliCase):

    def test_evolution_files(self):
        self.assertEqual(self.main('evolve', '--preset', 'affine-delta',
                                   '--grid', '16', '--levels', '32',
                                   '--t-end', '1.0', '--snapshots', '1'),
                         cli.EXIT_OK)
        first, rows = read_csv(self.path('evolve.csv'))
        self.assertTrue(first.startswith('# config_hash='))
        self.assertEqual(rows[0], ['t', 'births', 'population', 'conserved',
                                   'aeg_l1'])
        for name in ('lambda.txt', 'z_t0.csv', 'w_t0.csv'):
            self.assertTrue(os.path.exists(self.path(name)), name)
        first, rows = read_csv(self.path('z_t0.csv'))
        self.assertIn(' t=', first)
        self.assertEqual(rows[0], ['x_b', 'a', 'z', 'u'])
        first, rows = read_csv(self.path('w_t0.csv'))
        self.assertIn(' t=', first)
        self.assertEqual(rows[0], ['x', 'a', 'w'])

    def test_conserved_functional(self):
        self.assertEqual(self.main('evolve', '--preset', 'affine-delta',
                                   '--grid', '16', '--levels', '32',
                                   '--t-end', '4.0', '--initial', 'young'),
                         cli.EXIT_OK)
        _, rows = read_csv(self.path('evolve.csv'))
        column = rows[0].index('conserved')
        conserved = [float(row[column]) for row in rows[1:]]
        for value in conserved:
            self.assertAlmostEqual(value / conserved[0], 1.0, delta=1e-3)


class TestThreads(CliCase):

    def outputs(self, threads, *argv):
        out = os.path.join(self.out, 'threads{}'.format(threads))
        with mock.patch('builtins.print'):
            code = cli.main(list(argv) + ['--threads', str(threads),
                                          '--out', out])
        self.assertEqual(code, cli.EXIT_OK)
        files = {}
        for name in sorted(os.listdir(out)):
            with open(os.path.join(out, name), 'rb') as f:
                files[name] = f.read()
        return files

    def test_spectral_output_does_not_depend_on_threads(self):
        argv = ('spectral', '--preset', 'affine-delta', '--grid', '24',
                '--set', 'spectral.levels=48')
        one = self.outputs(1, *argv)
        self.assertIn('eig2d.csv', one)
        self.assertEqual(one, self.outputs(8, *argv))

    def test_evolve_output_does_not_depend_on_threads(self):
        argv = ('evolve', '--preset', 'affine-delta', '--grid', '16',
                '--levels', '32', '--t-end', '1.0', '--initial', 'skewed',
                '--snapshots', '1')
        one = self.outputs(1, *argv)
        self.assertIn('evolve.csv', one)
        self.assertEqual(one, self.outputs(8, *argv))


class TestAbm(CliCase):

    def test_single_type(self):
        self.assertEqual(self.main('abm', '--preset', 'constant-delta',
                                   '--cells', '200', '--initial-cells', '20',
                                   '--t-end', '3', '--seed', '1',
                                   '--census', '2',
                                   '--set', 'abm.records=10'),
                         cli.EXIT_OK)
        first, rows = read_csv(self.path('abm.csv'))
        self.assertTrue(first.startswith('# config_hash='))
        self.assertEqual(rows[0], ['t', 'count', 'weight', 'est_population',
                                   'type_1'])
        self.assertEqual(len(rows), 12)
        self.assertEqual(rows[1][1], '20')
        for name in ('census_t0.csv', 'census_t1.csv'):
            self.assertTrue(os.path.exists(self.path(name)), name)

    def test_same_seed_same_output(self):
        argv = ('abm', '--preset', 'affine-delta', '--cells', '100',
                '--initial-cells', '10', '--t-end', '2', '--seed', '7',
                '--set', 'abm.records=4')
        self.assertEqual(self.main(*argv), cli.EXIT_OK)
        with open(self.path('abm.csv')) as f:
            once = f.read()
        self.assertEqual(self.main(*argv), cli.EXIT_OK)
        with open(self.path('abm.csv')) as f:
            self.assertEqual(f.read(), once)

    def test_paradox_reports_distinct_sizes(self):
        self.assertEqual(self.main('abm', '--preset', 'paradox',
                                   '--initial-cells', '5', '--t-end', '2',
                                   '--set', 'abm.records=2'),
                         cli.EXIT_OK)
        _, rows = read_csv(self.path('abm.csv'))
        self.assertEqual(rows[0][-1], 'distinct_sizes')

    def test_two_types(self):
        self.assertEqual(self.main('abm', '--preset', 'crescentus',
                                   '--cells', '200', '--initial-cells', '20',
                                   '--t-end', '3',
                                   '--set', 'abm.records=5'),
                         cli.EXIT_OK)
        _, rows = read_csv(self.path('abm.csv'))
        self.assertEqual(rows[0][-2:], ['type_1', 'type_2'])

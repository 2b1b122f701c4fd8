"""The agesize command line.

    agesize validate [config] [--preset NAME] [--set key=value ...]
    agesize spectral [config] [--grid N]
    agesize evolve   [config] [--grid N] [--levels L] [--t-end T]
                     [--initial NAME] [--snapshots K] [--dilution D]
    agesize abm      [config] [--cells N] [--seed S] [--t-end T]
                     [--initial-cells M] [--census K]

Command line flags are turned into configuration overrides, so that the
configuration hash written at the top of every CSV file covers them.  Each
subcommand is a pipeline of cells (see agesize.core.pipeline) evaluated
against a fresh run context.

Exit codes: 0 ok, 1 configuration error, 2 assumption violation,
3 numerical failure.
"""

import argparse
import csv
import functools
import logging
import os
import sys

import numpy as np

from agesize.core import config as cfg
from agesize.core import context
from agesize.core import pipeline
from agesize.core.exceptions import (
    AbortExecution,
    AssumptionViolation,
    ConfigError,
    NumericalFailure,
    ShortTrajectory,
)
from agesize.core.utils import format_float
from agesize.model import abm
from agesize.model import cycle
from agesize.model import presets
from agesize.model import quadrature
from agesize.model import spectral
from agesize.model import transport
from agesize.model.growth import Kind as GrowthKind

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ASSUMPTION = 2
EXIT_NUMERICAL = 3

DEFAULT_GRID = 256
DEFAULT_LEVELS = 512
DEFAULT_CELLS = 100000
DEFAULT_INITIAL_CELLS = 100
DEFAULT_RECORDS = 200
ABM_HORIZON_CYCLES = 15

LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)

# flag name -> (configuration key, subcommands)
FLAG_KEYS = (
    ('grid', 'spectral.grid', ('spectral', 'evolve')),
    ('levels', 'spectral.levels', ('evolve', )),
    ('t_end', 'evolve.t_end', ('evolve', )),
    ('initial', 'evolve.initial', ('evolve', )),
    ('snapshots', 'evolve.snapshots', ('evolve', )),
    ('dilution', 'evolve.dilution', ('evolve', )),
    ('t_end', 'abm.t_end', ('abm', )),
    ('cells', 'abm.cells', ('abm', )),
    ('seed', 'abm.seed', ('abm', )),
    ('initial_cells', 'abm.n0', ('abm', )),
    ('census', 'abm.census', ('abm', )),
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog='agesize',
        description="Age-size structured cell population models")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('config', nargs='?', default=None,
                        help="YAML run configuration")
    common.add_argument('--preset', choices=sorted(presets.PRESETS),
                        help="start from a bundled model")
    common.add_argument('--set', action='append', default=[],
                        metavar='KEY=VALUE', help="override a key")
    common.add_argument('--out', default='.', help="output directory")
    common.add_argument('--threads', type=int, default=1,
                        help="worker threads for operator assembly")
    common.add_argument('-v', '--verbose', action='count', default=0)
    commands = parser.add_subparsers(dest='command')
    commands.required = True
    commands.add_parser('validate', parents=[common],
                        help="check the model assumptions")
    sub = commands.add_parser('spectral', parents=[common],
                              help="Malthusian parameter and profiles")
    sub.add_argument('--grid', type=int)
    sub = commands.add_parser('evolve', parents=[common],
                              help="evolve a density by transport")
    sub.add_argument('--grid', type=int)
    sub.add_argument('--levels', type=int)
    sub.add_argument('--t-end', dest='t_end', type=float)
    sub.add_argument('--initial', choices=transport.INITIAL_PRESETS)
    sub.add_argument('--snapshots', type=int)
    sub.add_argument('--dilution', type=float)
    sub = commands.add_parser('abm', parents=[common],
                              help="agent based simulation")
    sub.add_argument('--cells', type=int, help="population cap")
    sub.add_argument('--seed', type=int)
    sub.add_argument('--t-end', dest='t_end', type=float)
    sub.add_argument('--initial-cells', dest='initial_cells', type=int)
    sub.add_argument('--census', type=int)
    return parser


def flag_overrides(args):
    """'key=value' overrides for the flags given on the command line."""
    overrides = []
    for flag, key, commands in FLAG_KEYS:
        value = getattr(args, flag, None)
        if value is not None and args.command in commands:
            overrides.append("{}={}".format(key, value))
    return overrides


def setup_logging(verbose):
    logging.basicConfig(
        level=LOG_LEVELS[min(verbose, len(LOG_LEVELS) - 1)],
        format='%(levelname)s %(name)s: %(message)s')
    logging.captureWarnings(True)


# writers

def _format(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return '' if value is None else str(value)


def write_csv(path, header, rows, config_hash, t=None):
    """Write rows under a '# config_hash=...' line (with the time for
    snapshots) and a header line."""
    with open(path, 'w', newline='') as f:
        if t is None:
            f.write("# config_hash={}\n".format(config_hash))
        else:
            f.write("# config_hash={} t={}\n".format(config_hash,
                                                     format_float(t)))
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format(v) for v in row])
    logger.info("Wrote %s", path)


def _path(ctxt, name):
    return os.path.join(ctxt.out, name)


# compute cells

def _law(ctxt):
    return presets.build_law(ctxt.config)


def _model(ctxt):
    return presets.build_cycle(ctxt.config, ctxt.law)


def _rule(ctxt):
    return presets.build_rule(ctxt.config)


def _report(ctxt):
    return cycle.validate_assumptions(ctxt.law, ctxt.model)


def _hetero_report(ctxt):
    return cycle.validate_hetero(ctxt.rule)


def _checked(ctxt):
    report = ctxt.report
    if not report.ok:
        raise AssumptionViolation(
            "Assumptions fail: {}".format(
                ", ".join(c.name for c in report.failures)), report)
    return True


def _grid(ctxt):
    law = ctxt.law
    return quadrature.QuadratureGrid.with_size(
        law.x_lo, law.x_hi,
        cfg.get_int(ctxt.config, 'spectral.grid', DEFAULT_GRID))


def _spectral(ctxt, age_rule='gauss'):
    return spectral.solve(
        ctxt.law, ctxt.model, ctxt.grid,
        levels=cfg.get_int(ctxt.config, 'spectral.levels', DEFAULT_LEVELS),
        threads=ctxt.threads, age_rule=age_rule)


def _evolution(ctxt):
    config, solution = ctxt.config, ctxt.dynamics
    initial = cfg.get_str(config, 'evolve.initial', 'eigen',
                          choices=transport.INITIAL_PRESETS)
    t_end = cfg.get_float(config, 'evolve.t_end',
                          transport.DEFAULT_HORIZON_CYCLES *
                          solution.mean_cycle)
    count = cfg.get_int(config, 'evolve.snapshots', 0)
    state = transport.init_state(initial, ctxt.law, ctxt.model, ctxt.grid,
                                 solution.ages, solution)
    snapshots = []

    def snapshot(index, state):
        table = transport.age_size_transform(state)
        snapshots.append((index, state.t, state.z, state.u, table))

    times = [t_end * (k + 1) / count for k in range(count)]
    report = transport.evolve(state, t_end, solution, snapshot_times=times,
                              on_snapshot=snapshot)
    dilution = cfg.get_float(config, 'evolve.dilution', None)
    if dilution is not None:
        report = transport.chemostat_rescale(report, dilution)
    return {'report': report, 'snapshots': snapshots}


def _mode(ctxt):
    return presets.build_mode(ctxt.config, ctxt.law)


def _hetero_mode(ctxt):
    return presets.build_mode(ctxt.config, ctxt.rule.laws[0])


def _trajectory(ctxt, hetero=False):
    config = ctxt.config
    if hetero:
        rule = ctxt.rule
        law, model = rule.laws[0], rule.models[0]
    else:
        rule, law, model = None, ctxt.law, ctxt.model
    initial = {'n': cfg.get_int(config, 'abm.n0', DEFAULT_INITIAL_CELLS)}
    dirac = cfg.get_float(config, 'abm.dirac', None)
    if dirac is not None:
        initial = {'dirac': dirac, 'n': cfg.get_int(config, 'abm.n0', 1)}
    pop = abm.seed_population(initial, law, model,
                              cfg.get_int(config, 'abm.seed', 0),
                              mode=ctxt.mode, rule=rule)
    t_end = cfg.get_float(config, 'abm.t_end',
                          ABM_HORIZON_CYCLES * model.mean_cycle_length())
    records = cfg.get_int(config, 'abm.records', DEFAULT_RECORDS)
    times = np.linspace(0.0, t_end, records + 1)
    return abm.run(pop, t_end, census_times=times,
                   n_max=cfg.get_int(config, 'abm.cells', DEFAULT_CELLS))


# output cells

def _write_validation(ctxt):
    report = ctxt.report
    print(report.to_text())
    write_csv(_path(ctxt, 'validation.csv'),
              ('assumption', 'status', 'worst_x', 'worst_value'),
              report.rows(), ctxt.config_hash)


def _write_lambda(ctxt):
    solution = ctxt.spectral
    r = solution.residuals
    line = " ".join(format_float(v) for v in (
        solution.lam, r['r_K'], r['r_J'], r['adjoint_gap']))
    with open(_path(ctxt, 'lambda.txt'), 'w') as f:
        f.write(line + "\n")
    print("lambda = {}".format(format_float(solution.lam)))


def _write_profiles(ctxt):
    solution = ctxt.spectral
    grid = solution.grid
    write_csv(_path(ctxt, 'spectral.csv'),
              ('x_b', 'f_tilde', 'v_tilde'),
              zip(grid.nodes, solution.f_tilde, solution.v_tilde),
              ctxt.config_hash)


def _write_eig2d(ctxt):
    solution = ctxt.spectral
    grid, ages = solution.grid, solution.ages
    mask = ages.mask(np.asarray(ctxt.model.support(grid.nodes)[1]))

    def rows():
        for i, k in zip(*np.nonzero(mask)):
            yield (grid.nodes[i], ages.ages[k], solution.f_full[i, k],
                   solution.v_full[i, k])

    write_csv(_path(ctxt, 'eig2d.csv'), ('x_b', 'a', 'f_i', 'v'),
              rows(), ctxt.config_hash)


def _write_evolution(ctxt):
    report = ctxt.evolution['report']
    write_csv(_path(ctxt, 'evolve.csv'),
              ('t', 'births', 'population', 'conserved', 'aeg_l1'),
              report.rows(), ctxt.config_hash)
    print("growth rate = {} (lambda = {})".format(
        format_float(report.growth_rate()), format_float(report.lam)))
    if report.status is not None:
        print("chemostat D = {}: {}".format(format_float(report.dilution),
                                            report.status))


def _write_snapshots(ctxt):
    grid = ctxt.grid
    for index, t, z, u, table in ctxt.evolution['snapshots']:
        ages = table.ages
        write_csv(_path(ctxt, 'z_t{}.csv'.format(index)),
                  ('x_b', 'a', 'z', 'u'),
                  ((grid.nodes[i], ages.ages[k], z[i, k], u[i, k])
                   for i in range(grid.n) for k in range(ages.levels)),
                  ctxt.config_hash, t)
        write_csv(_path(ctxt, 'w_t{}.csv'.format(index)),
                  ('x', 'a', 'w'),
                  ((table.x[i], ages.ages[k], table.w[i, k])
                   for i in range(table.x.size)
                   for k in range(ages.levels)),
                  ctxt.config_hash, t)


def _write_abm(ctxt, law):
    trajectory = ctxt.trajectory
    distinct = (law.kind == GrowthKind.DYADIC and
                ctxt.mode.mode == abm.Mode.DETERMINISTIC)
    header = ['t', 'count', 'weight', 'est_population']
    header += ['type_{}'.format(k + 1) for k in range(trajectory.n_types)]
    if distinct:
        header.append('distinct_sizes')
    write_csv(_path(ctxt, 'abm.csv'), header, trajectory.rows(distinct),
              ctxt.config_hash)
    try:
        lam, stderr = abm.estimate_malthus(trajectory)
    except ShortTrajectory as e:
        logger.warning("No growth rate estimate: %s", e)
        return
    print("lambda_hat = {} +- {}".format(format_float(lam),
                                         format_float(stderr)))


def _write_censuses(ctxt):
    censuses = ctxt.trajectory.censuses
    count = cfg.get_int(ctxt.config, 'abm.census', 0)
    if not count or not censuses:
        return
    picks = sorted(set(int(round((len(censuses) - 1) * (k + 1) / count))
                       for k in range(count)))
    for index, pick in enumerate(picks):
        c = censuses[pick]
        write_csv(_path(ctxt, 'census_t{}.csv'.format(index)),
                  ('t', 'type', 'x_b', 'a', 'generation', 'weight', 'size'),
                  ((c.t, c.type_id[i] + 1, c.x_b[i], c.age[i],
                    c.generation[i], c.weight, c.size[i])
                   for i in range(len(c))),
                  ctxt.config_hash)


# pipelines

def _single_type(p):
    pipeline.add_compute(p, 'law', _law, ['config'])
    pipeline.add_compute(p, 'model', _model, ['config', 'law'])
    pipeline.add_compute(p, 'report', _report, ['law', 'model'])


def build_pipeline(command, config, out, threads):
    """The cells for a subcommand and the targets to run.

    :raises ConfigError: if a two-type configuration is used with a command
        that needs a single type
    """
    hetero = presets.is_hetero(config)
    if hetero and command in ('spectral', 'evolve'):
        raise ConfigError("'{}' needs a single-type model; two-type rules "
                          "are supported by validate and abm"
                          .format(command))
    p = pipeline.new_pipeline()
    pipeline.add_input(p, 'config', config)
    pipeline.add_input(p, 'config_hash', cfg.config_hash(config))
    pipeline.add_input(p, 'out', out)
    pipeline.add_input(p, 'threads', threads)
    if hetero:
        pipeline.add_compute(p, 'rule', _rule, ['config'])
        pipeline.add_compute(p, 'report', _hetero_report, ['rule'])
    else:
        _single_type(p)
    pipeline.add_output(p, 'write_validation', _write_validation,
                        ['report', 'config', 'config_hash', 'out'])
    pipeline.add_compute(p, 'checked', _checked, ['report'])
    if command in ('spectral', 'evolve'):
        pipeline.add_compute(p, 'grid', _grid, ['config', 'law'])
        pipeline.add_compute(p, 'spectral', _spectral,
                             ['config', 'law', 'model', 'grid', 'threads',
                              'checked'])
        pipeline.add_output(p, 'write_lambda', _write_lambda,
                            ['spectral', 'out'])
        pipeline.add_output(p, 'write_profiles', _write_profiles,
                            ['spectral', 'config_hash', 'out'])
        pipeline.add_output(p, 'write_eig2d', _write_eig2d,
                            ['spectral', 'model', 'config_hash', 'out'])
        pipeline.add_compute(p, 'dynamics',
                             functools.partial(_spectral, age_rule='levels'),
                             ['config', 'law', 'model', 'grid', 'threads',
                              'checked'])
        pipeline.add_compute(p, 'evolution', _evolution,
                             ['config', 'law', 'model', 'grid', 'dynamics'])
        pipeline.add_output(p, 'write_evolution', _write_evolution,
                            ['evolution', 'config_hash', 'out'])
        pipeline.add_output(p, 'write_snapshots', _write_snapshots,
                            ['evolution', 'grid', 'config_hash', 'out'])
    if command == 'abm':
        if hetero:
            pipeline.add_compute(p, 'mode', _hetero_mode, ['config', 'rule'])
            pipeline.add_compute(
                p, 'trajectory', functools.partial(_trajectory, hetero=True),
                ['config', 'rule', 'mode', 'checked'])
            law_key = 'rule'
        else:
            pipeline.add_compute(p, 'mode', _mode, ['config', 'law'])
            pipeline.add_compute(p, 'trajectory', _trajectory,
                                 ['config', 'law', 'model', 'mode',
                                  'checked'])
            law_key = 'law'

        def write_abm(ctxt):
            law = ctxt.rule.laws[0] if hetero else ctxt.law
            _write_abm(ctxt, law)

        pipeline.add_output(p, 'write_abm', write_abm,
                            ['trajectory', 'mode', law_key, 'config_hash',
                             'out'])
        pipeline.add_output(p, 'write_censuses', _write_censuses,
                            ['trajectory', 'config', 'config_hash', 'out'])
    targets = {
        'validate': ['write_validation'],
        'spectral': ['write_lambda', 'write_profiles', 'write_eig2d'],
        'evolve': ['write_lambda', 'write_evolution', 'write_snapshots'],
        'abm': ['write_abm', 'write_censuses'],
    }[command]
    return p, targets


def execute(command, config, out='.', threads=1):
    """Run a subcommand; returns the run context.

    :raises AgesizeError: as raised by the cells
    :raises AbortExecution: if a cell fails unexpectedly
    """
    os.makedirs(out, exist_ok=True)
    p, targets = build_pipeline(command, config, out, threads)
    ctxt = context.new_context()
    pipeline.run(p, targets,
                 functools.partial(context.context, _context=ctxt),
                 functools.partial(context.set_context, _context=ctxt))
    return ctxt


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        config = cfg.load_config(args.config, args.preset,
                                 list(args.set) + flag_overrides(args),
                                 presets.PRESETS)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        ctxt = execute(args.command, config, args.out, args.threads)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG
    except AssumptionViolation as e:
        logger.error("Assumption violation: %s", e)
        if e.report is not None:
            print(e.report.to_text())
        return EXIT_ASSUMPTION
    except (NumericalFailure, AbortExecution) as e:
        logger.error("Numerical failure: %s", e)
        return EXIT_NUMERICAL
    if args.command == 'validate' and not ctxt['report'].ok:
        return EXIT_ASSUMPTION
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())

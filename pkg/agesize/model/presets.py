"""Named model bundles and the builders that turn a configuration into
growth laws, cycle models, division rules and ABM modes.

A preset is a flat mapping of dotted keys; load_config() merges it under the
run's own file and overrides.  Missing keys take the defaults documented on
each builder.
"""

import logging
import math

import numpy as np

from agesize.core import config as cfg
from agesize.core.exceptions import ConfigError
from agesize.model import abm
from agesize.model.cycle import (
    ConstantDeltaCycle,
    DelayedCycle,
    GrowthRateDistribution,
    ScalarDensity,
    TabulatedCycle,
    TargetSizeCycle,
)
from agesize.model.growth import GrowthLaw, HeteroDivisionRule, dyadic_seed

logger = logging.getLogger(__name__)

GROWTH_KINDS = ('exponential', 'affine', 'tabulated', 'dyadic')
CYCLE_KINDS = ('constant_delta', 'target_size', 'tabulated')
DENSITY_KINDS = ('uniform', 'truncnorm', 'beta')
ABM_MODES = ('deterministic', 'inherited_rate', 'sde')
NOISE_KINDS = ('linear', 'power')

PRESETS = {
    'exponential-target': {
        'growth.kind': 'exponential',
        'growth.kappa': 1.0,
        'cycle.kind': 'target_size',
        'cycle.alpha': 0.5,
        'cycle.x0': 1.0,
        'cycle.epsilon': 0.1,
        'cycle.xi.kind': 'beta',
        'cycle.xi.shape': 3.0,
    },
    'constant-delta': {
        'growth.kind': 'exponential',
        'growth.kappa': 1.0,
        'window.lo': 0.9,
        'window.hi': 1.1,
        'cycle.kind': 'constant_delta',
        'cycle.delta.kind': 'uniform',
        'cycle.delta.lo': 0.9,
        'cycle.delta.hi': 1.1,
    },
    'affine-delta': {
        'growth.kind': 'affine',
        'growth.kappa': 0.2,
        'growth.beta': 1.0,
        'window.lo': 0.4,
        'window.hi': 1.6,
        'cycle.kind': 'constant_delta',
        'cycle.delta.kind': 'beta',
        'cycle.delta.lo': 0.4,
        'cycle.delta.hi': 1.6,
        'cycle.delta.shape': 3.0,
    },
    'paradox': {
        'growth.kind': 'dyadic',
        'growth.seed': 'wavy',
        'growth.kappa': 1.0,
        'growth.delta': 0.05,
        'window.lo': 1.0,
        'window.hi': 1.6,
        'cycle.kind': 'constant_delta',
        'cycle.delta.kind': 'beta',
        'cycle.delta.lo': 1.0 + 1e-6,
        'cycle.delta.hi': 1.6 - 1e-6,
        'cycle.delta.shape': 3.0,
    },
    'crescentus': {
        'growth.kind': 'exponential',
        'growth.kappa': 1.0,
        'window.lo': 1.0,
        'window.hi': 1.3,
        'cycle.kind': 'constant_delta',
        'cycle.delta.kind': 'beta',
        'cycle.delta.shape': 3.0,
        'hetero.beta_major': 0.56,
        'hetero.beta_minor': 0.44,
        'hetero.r_minor': 0.5,
        'hetero.pairing': False,
    },
    'subtilis': {
        'growth.kind': 'exponential',
        'growth.kappa': 1.0,
        'window.lo': 1.0,
        'window.hi': 1.3,
        'cycle.kind': 'constant_delta',
        'cycle.delta.kind': 'beta',
        'cycle.delta.shape': 3.0,
        'hetero.beta_major': 0.5,
        'hetero.beta_minor': 0.3,
        'hetero.r_minor': 0.1,
        'hetero.pairing': False,
    },
}


def is_hetero(config):
    return config.lookup('hetero') is not None


def build_density(config, prefix, lo=None, hi=None):
    """A ScalarDensity from '<prefix>.kind', '.lo', '.hi', '.shape' and
    '.sd'.  kind defaults to uniform; lo and hi default to the given bounds.
    """
    kind = cfg.get_str(config, prefix + '.kind', 'uniform',
                       choices=DENSITY_KINDS)
    lo = cfg.get_float(config, prefix + '.lo', lo)
    hi = cfg.get_float(config, prefix + '.hi', hi)
    if lo is None or hi is None:
        raise ConfigError("'{}' needs lo and hi".format(prefix))
    if kind == 'uniform':
        return ScalarDensity.uniform(lo, hi)
    if kind == 'truncnorm':
        return ScalarDensity.truncnorm(
            lo, hi, mean=cfg.get_float(config, prefix + '.mean', None),
            sd=cfg.get_float(config, prefix + '.sd', None))
    return ScalarDensity.beta(lo, hi,
                              shape=cfg.get_float(config, prefix + '.shape',
                                                  3.0))


def build_window(config):
    """[x_lo, x_hi] from window.lo/window.hi, or for exponential target-size
    models from the closed window [x0 e^(-k eps/alpha), x0 e^(k eps/alpha)].
    """
    lo = config.lookup('window.lo')
    hi = config.lookup('window.hi')
    if lo is not None and hi is not None:
        return cfg.get_float(config, 'window.lo'), cfg.get_float(config,
                                                                 'window.hi')
    if (cfg.get_str(config, 'cycle.kind', None) == 'target_size' and
            cfg.get_str(config, 'growth.kind', None) == 'exponential'):
        return TargetSizeCycle.window(
            cfg.get_float(config, 'growth.kappa'),
            cfg.get_float(config, 'cycle.alpha'),
            cfg.get_float(config, 'cycle.x0'),
            cfg.get_float(config, 'cycle.epsilon'))
    if cfg.get_str(config, 'cycle.kind', None) == 'tabulated':
        table = TabulatedCycle.from_csv(cfg.get_str(config, 'cycle.table'))
        return table.x_lo, table.x_hi
    raise ConfigError("Missing window.lo/window.hi")


def _read_growth_table(path):
    try:
        data = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise ConfigError("Can't read growth table '{}': {}".format(path, e))
    if data.shape[1] != 2:
        raise ConfigError("Growth table '{}' needs two columns x,g"
                          .format(path))
    return data[:, 0], data[:, 1]


def build_law(config, x_lo=None, x_hi=None, x_max=None):
    """The growth law named by growth.kind on the configured window.

    :raises ConfigError: for unknown kinds or bad parameters
    """
    if x_lo is None:
        x_lo, x_hi = build_window(config)
    kind = cfg.get_str(config, 'growth.kind', choices=GROWTH_KINDS)
    if kind == 'exponential':
        return GrowthLaw.exponential(cfg.get_float(config, 'growth.kappa'),
                                     x_lo, x_hi, x_max)
    if kind == 'affine':
        return GrowthLaw.affine(cfg.get_float(config, 'growth.kappa'),
                                cfg.get_float(config, 'growth.beta'),
                                x_lo, x_hi, x_max)
    if kind == 'tabulated':
        if config.lookup('growth.table') is not None:
            sizes, rates = _read_growth_table(cfg.get_str(config,
                                                          'growth.table'))
        else:
            sizes = np.array(cfg.get_list(config, 'growth.sizes'), float)
            rates = np.array(cfg.get_list(config, 'growth.rates'), float)
        return GrowthLaw.tabulated(sizes, rates, x_lo, x_hi, x_max)
    seed, _ = build_seed(config, x_lo)
    return GrowthLaw.dyadic(seed, x_lo, x_hi, x_max)


def build_seed(config, x_lo):
    """(seed, derivative) for the dyadic law."""
    return dyadic_seed(cfg.get_str(config, 'growth.seed', 'linear'),
                       cfg.get_float(config, 'growth.kappa'), x_lo,
                       cfg.get_float(config, 'growth.delta', 0.0))


def build_cycle(config, law):
    kind = cfg.get_str(config, 'cycle.kind', choices=CYCLE_KINDS)
    if kind == 'constant_delta':
        return ConstantDeltaCycle(law, build_density(config, 'cycle.delta'))
    if kind == 'target_size':
        epsilon = cfg.get_float(config, 'cycle.epsilon', None)
        xi = build_density(config, 'cycle.xi',
                           None if epsilon is None else -epsilon, epsilon)
        return TargetSizeCycle(law, cfg.get_float(config, 'cycle.alpha'),
                               cfg.get_float(config, 'cycle.x0'), xi)
    model = TabulatedCycle.from_csv(cfg.get_str(config, 'cycle.table'))
    if abs(model.x_lo - law.x_lo) > law._tol or abs(
            model.x_hi - law.x_hi) > law._tol:
        raise ConfigError("Cycle table covers [{}, {}], the window is "
                          "[{}, {}]".format(model.x_lo, model.x_hi,
                                            law.x_lo, law.x_hi))
    return model


def build_rule(config):
    """Two-type maturation rule: a major type that divides like a
    constant-Delta cell and a minor type that first matures into it.

    Daughters of either type are of the minor type with probability
    hetero.r_minor and get beta_minor (else beta_major) of the mother's
    size.  The major window W1 comes from window.lo/hi; the increment
    density is placed on c W1 with c = (1 - beta_major) / beta_major so that
    W1 is closed, the minor window is (beta_minor / beta_major) W1 and minor
    cells mature for ln(beta_major / beta_minor) / kappa.

    :raises ConfigError: if the growth law is not exponential or the
        parameters are out of range
    """
    if cfg.get_str(config, 'growth.kind') != 'exponential':
        raise ConfigError("Two-type rules need exponential growth")
    kappa = cfg.get_float(config, 'growth.kappa')
    major = cfg.get_float(config, 'hetero.beta_major')
    minor = cfg.get_float(config, 'hetero.beta_minor')
    r_minor = cfg.get_float(config, 'hetero.r_minor')
    pairing = cfg.get_bool(config, 'hetero.pairing', False)
    for name, value in (('beta_major', major), ('beta_minor', minor),
                        ('r_minor', r_minor)):
        if not 0 < value < 1:
            raise ConfigError("hetero.{} must lie in (0, 1), got {}"
                              .format(name, value))
    if not minor <= 0.5 or not minor < major:
        raise ConfigError("hetero.beta_minor must be <= 1/2 and below "
                          "beta_major")
    lo, hi = build_window(config)
    c = (1.0 - major) / major
    law1 = GrowthLaw.exponential(kappa, lo, hi, max(2.0 * hi, hi / major))
    delta = build_density(config, 'cycle.delta', c * lo, c * hi)
    model1 = ConstantDeltaCycle(law1, delta)
    shrink = minor / major
    law2 = GrowthLaw.exponential(kappa, shrink * lo, shrink * hi, hi / major)
    model2 = DelayedCycle(model1, math.log(major / minor) / kappa,
                          major / minor, shrink * lo, shrink * hi)
    r = [[1.0 - r_minor, r_minor]] * 2
    beta = [[major, minor]] * 2
    return HeteroDivisionRule(r, beta, (law1, law2), (model1, model2),
                              pairing=pairing)


def build_rates(config, law):
    """Inherited growth rates: truncated normal around abm.rate.mean
    (default kappa) with cv abm.rate.cv (default 0.15)."""
    mean = cfg.get_float(config, 'abm.rate.mean', law.kappa)
    if mean is None:
        raise ConfigError("abm.rate.mean is needed when g has no kappa")
    return GrowthRateDistribution.default(
        mean, cfg.get_float(config, 'abm.rate.cv', 0.15))


def build_mode(config, law):
    mode = cfg.get_str(config, 'abm.mode', 'deterministic', choices=ABM_MODES)
    if mode == 'deterministic':
        return abm.ModeSpec()
    if mode == 'inherited_rate':
        return abm.ModeSpec(abm.Mode.INHERITED_RATE,
                            rates=build_rates(config, law))
    noise = cfg.get_str(config, 'abm.noise', 'linear', choices=NOISE_KINDS)
    return abm.ModeSpec(abm.Mode.SDE,
                        s0=cfg.get_float(config, 'abm.s0', 0.0),
                        gamma=cfg.get_float(config, 'abm.gamma', 1.0),
                        noise=abm.Noise[noise.upper()])

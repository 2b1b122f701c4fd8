import math
import unittest

import numpy as np

import agesize.model.presets as presets
from agesize.core import config as cfg
from agesize.core.exceptions import ConfigError
from agesize.model import abm, cycle, growth


def load(preset=None, *overrides):
    return cfg.load_config(preset=preset, overrides=overrides,
                           presets=presets.PRESETS)


class TestBundledPresets(unittest.TestCase):

    def test_single_type_presets_validate(self):
        for name in ('exponential-target', 'constant-delta', 'affine-delta',
                     'paradox'):
            config = load(name)
            self.assertFalse(presets.is_hetero(config))
            law = presets.build_law(config)
            model = presets.build_cycle(config, law)
            report = cycle.validate_assumptions(law, model, n=64)
            self.assertTrue(report.ok, "{}:\n{}".format(name,
                                                        report.to_text()))

    def test_paradox_validates_at_the_default_resolution(self):
        config = load('paradox')
        law = presets.build_law(config)
        model = presets.build_cycle(config, law)
        report = cycle.validate_assumptions(law, model)
        self.assertTrue(report.ok, report.to_text())
        delta = model.delta
        self.assertGreater(delta.lo, law.x_lo)
        self.assertLess(delta.hi, law.x_hi)

    def test_constant_delta_normalization(self):
        config = load('constant-delta')
        law = presets.build_law(config)
        model = presets.build_cycle(config, law)
        self.assertLess(np.max(model.normalization_error(
            np.linspace(0.9, 1.1, 11))), 1e-8)

    def test_target_size_window(self):
        config = load('exponential-target')
        lo, hi = presets.build_window(config)
        self.assertAlmostEqual(lo, math.exp(-0.2), places=14)
        self.assertAlmostEqual(hi, math.exp(0.2), places=14)
        model = presets.build_cycle(config, presets.build_law(config))
        self.assertIsInstance(model, cycle.TargetSizeCycle)

    def test_paradox_law_is_dyadic(self):
        law = presets.build_law(load('paradox'))
        self.assertEqual(law.kind, growth.Kind.DYADIC)
        self.assertTrue(law.is_homogeneous())

    def test_hetero_presets_validate(self):
        for name in ('crescentus', 'subtilis'):
            config = load(name)
            self.assertTrue(presets.is_hetero(config))
            rule = presets.build_rule(config)
            report = cycle.validate_hetero(rule, n=64)
            self.assertTrue(report.ok, "{}:\n{}".format(name,
                                                        report.to_text()))


class TestBuilders(unittest.TestCase):

    def test_window_is_required(self):
        with self.assertRaises(ConfigError):
            presets.build_window(load(None, 'growth.kind=affine'))

    def test_tabulated_law_from_lists(self):
        config = load(None, 'growth.kind=tabulated', 'window.lo=1.0',
                      'window.hi=1.5', 'growth.sizes=[1.0, 2.0, 3.0]',
                      'growth.rates=[1.0, 2.0, 3.0]')
        law = presets.build_law(config)
        self.assertEqual(law.kind, growth.Kind.TABULATED)
        self.assertAlmostEqual(law.flow(1.0, 0.5), math.exp(0.5),
                               delta=1e-6)

    def test_unknown_kinds(self):
        with self.assertRaises(ConfigError):
            presets.build_law(load('affine-delta', 'growth.kind=logistic'))
        with self.assertRaises(ConfigError):
            config = load('affine-delta', 'cycle.kind=sizer')
            presets.build_cycle(config, presets.build_law(config))

    def test_density_kinds(self):
        config = load(None, 'd.kind=truncnorm', 'd.lo=0.5', 'd.hi=1.5')
        density = presets.build_density(config, 'd')
        self.assertEqual(density.name, 'truncnorm')
        self.assertEqual(presets.build_density(
            load(None, 'e.lo=0.0'), 'e', hi=2.0).name, 'uniform')
        with self.assertRaises(ConfigError):
            presets.build_density(load(None, 'd.kind=beta'), 'd')

    def test_seed(self):
        config = load('paradox')
        seed, derivative = presets.build_seed(config, 1.0)
        self.assertAlmostEqual(float(seed(2.0)), 2.0 * float(seed(1.0)))

    def test_modes(self):
        config = load('affine-delta')
        law = presets.build_law(config)
        self.assertEqual(presets.build_mode(config, law).mode,
                         abm.Mode.DETERMINISTIC)
        mode = presets.build_mode(load('affine-delta',
                                       'abm.mode=inherited_rate',
                                       'abm.rate.cv=0.05'), law)
        self.assertEqual(mode.mode, abm.Mode.INHERITED_RATE)
        self.assertAlmostEqual(mode.rates.hi, 0.225)
        mode = presets.build_mode(load('affine-delta', 'abm.mode=sde',
                                       'abm.noise=power', 'abm.s0=0.1',
                                       'abm.gamma=0.5'), law)
        self.assertEqual((mode.mode, mode.noise, mode.s0, mode.gamma),
                         (abm.Mode.SDE, abm.Noise.POWER, 0.1, 0.5))
        with self.assertRaises(ConfigError):
            presets.build_mode(load('affine-delta', 'abm.mode=ode'), law)


class TestBuildRule(unittest.TestCase):

    def test_crescentus_rule(self):
        rule = presets.build_rule(load('crescentus'))
        self.assertEqual(rule.n_types, 2)
        np.testing.assert_allclose(rule.r, [[0.5, 0.5], [0.5, 0.5]])
        np.testing.assert_allclose(rule.beta, [[0.56, 0.44], [0.56, 0.44]])
        major, minor = rule.models
        self.assertAlmostEqual(minor.delay, math.log(0.56 / 0.44))
        self.assertAlmostEqual(minor.x_hi, 1.3 * 0.44 / 0.56)
        self.assertFalse(rule.pairing)

    def test_pairing(self):
        rule = presets.build_rule(load('crescentus', 'hetero.pairing=true'))
        self.assertTrue(rule.pairing)
        with self.assertRaises(ConfigError):
            presets.build_rule(load('subtilis', 'hetero.pairing=true'))

    def test_bad_parameters(self):
        with self.assertRaises(ConfigError):
            presets.build_rule(load('crescentus', 'growth.kind=affine',
                                    'growth.beta=0.5'))
        with self.assertRaises(ConfigError):
            presets.build_rule(load('crescentus', 'hetero.beta_major=1.2'))
        with self.assertRaises(ConfigError):
            presets.build_rule(load('crescentus', 'hetero.beta_minor=0.6'))

    def test_abm_run_keeps_both_types(self):
        rule = presets.build_rule(load('crescentus'))
        pop = abm.seed_population({'n': 40}, None, None, seed=2, rule=rule)
        trajectory = abm.run(pop, 4.0, census_times=[4.0])
        census = trajectory.censuses[-1]
        self.assertGreater(trajectory.type_counts(0)[-1], 0)
        self.assertGreater(trajectory.type_counts(1)[-1], 0)
        for type_id, model in enumerate(rule.models):
            x_b = census.x_b[census.type_id == type_id]
            self.assertTrue(np.all((x_b >= model.x_lo) &
                                   (x_b <= model.x_hi)))

    def test_types_share_one_growth_rate(self):
        rule = presets.build_rule(load('crescentus'))
        pop = abm.seed_population({'n': 400}, None, None, seed=6, rule=rule)
        t_end = 16 * rule.models[0].mean_cycle_length()
        trajectory = abm.run(pop, t_end,
                             census_times=np.linspace(0, t_end, 81),
                             n_max=8000)
        major, major_se = abm.estimate_malthus(trajectory, type_id=0)
        minor, minor_se = abm.estimate_malthus(trajectory, type_id=1)
        spread = 3 * math.hypot(major_se, minor_se)
        self.assertLess(abs(major - minor), max(spread, 2e-2 * major))

    def test_paired_divisions(self):
        rule = presets.build_rule(load('crescentus', 'hetero.pairing=true'))
        pop = abm.seed_population({'dirac': 1.1}, None, None, seed=2,
                                  rule=rule)
        abm.run(pop, pop.heap[0][0] + 1e-9)
        self.assertEqual(sorted(c.type_id for c in pop.cells.values()),
                         [0, 1])

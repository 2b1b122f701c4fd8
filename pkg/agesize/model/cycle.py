"""Cycle length models.

A CycleModel gives the density q(x_b, a) of the cycle length of a cell born
with size x_b, together with its support [a_lo(x_b), a_hi(x_b)], the
distribution function, the survival function Phi = 1 - CDF, the weight
Psi = 1 / Phi, the hazard q / Phi and inverse-CDF sampling.

Models:

    ConstantDeltaCycle  the cell divides after adding a random size Delta
    TargetSizeCycle     the cell aims for the size 2 x_b^(1 - alpha) x0^alpha
                        and divides a random time xi after reaching it
    TabulatedCycle      q given on a rectangular (x_b, a) grid
    DelayedCycle        another model shifted by a maturation delay

validate_assumptions() checks the model assumptions (A1)-(A7) on a grid and
returns an AssumptionReport.
"""

import collections
import enum
import logging

import numpy as np
from scipy import stats

from agesize.core.exceptions import (
    ConfigError,
    OutOfWindow,
    SurvivalZero,
)
from agesize.model import quadrature
from agesize.model.growth import CLAMP_TOLERANCE, _as_output

logger = logging.getLogger(__name__)

Kind = enum.Enum('Kind', 'TABULATED CONSTANT_DELTA TARGET_SIZE DELAYED')
Status = enum.Enum('Status', 'PASS FAIL WARN')

SURVIVAL_FLOOR = 1e-300
NORMALIZATION_TOLERANCE = 1e-8
RENORMALIZATION_REPORT = 1e-4
PPF_ITERATIONS = 64
VALIDATION_NODES = 256


class ScalarDensity(object):
    """A density on [lo, hi] backed by a frozen scipy.stats distribution."""

    def __init__(self, frozen, lo, hi, name, continuous):
        if not lo < hi:
            raise ConfigError("Density support needs lo < hi, got [{}, {}]"
                              .format(lo, hi))
        self.frozen = frozen
        self.lo = float(lo)
        self.hi = float(hi)
        self.name = name
        self.continuous = continuous

    @classmethod
    def uniform(cls, lo, hi):
        return cls(stats.uniform(loc=lo, scale=hi - lo), lo, hi, 'uniform',
                   False)

    @classmethod
    def truncnorm(cls, lo, hi, mean=None, sd=None):
        """Normal truncated to [lo, hi]; by default centred with
        sd = half-width / 2.5."""
        mean = 0.5 * (lo + hi) if mean is None else float(mean)
        sd = (hi - lo) / 5.0 if sd is None else float(sd)
        if sd <= 0:
            raise ConfigError("Truncated normal needs sd > 0")
        frozen = stats.truncnorm((lo - mean) / sd, (hi - mean) / sd,
                                 loc=mean, scale=sd)
        return cls(frozen, lo, hi, 'truncnorm', False)

    @classmethod
    def beta(cls, lo, hi, shape=3.0):
        """Symmetric beta(shape, shape) on [lo, hi]."""
        if shape <= 0:
            raise ConfigError("Beta shape must be positive, got {}"
                              .format(shape))
        return cls(stats.beta(shape, shape, loc=lo, scale=hi - lo), lo, hi,
                   'beta', shape > 1)

    def __repr__(self):
        return "ScalarDensity({}, [{}, {}])".format(self.name, self.lo,
                                                    self.hi)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        with np.errstate(invalid='ignore'):
            return np.where(inside, self.frozen.pdf(np.where(inside, x,
                                                             self.lo)), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.lo, 0.0,
                        np.where(x >= self.hi, 1.0, self.frozen.cdf(x)))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.lo, 1.0,
                        np.where(x >= self.hi, 0.0, self.frozen.sf(x)))

    def ppf(self, u):
        return np.clip(self.frozen.ppf(np.asarray(u, dtype=float)),
                       self.lo, self.hi)

    def mean(self):
        return float(self.frozen.mean())

    def std(self):
        return float(self.frozen.std())


class CycleModel(object):
    """Base class; subclasses provide _support, _density, _cdf and may
    override _sf and _ppf.  The hooks receive x_b already checked against
    the window and broadcast against a (or u)."""

    kind = None

    def __init__(self, x_lo, x_hi, continuous=True):
        if not 0 < x_lo < x_hi:
            raise ConfigError("Cycle window needs 0 < x_lo < x_hi, got "
                              "[{}, {}]".format(x_lo, x_hi))
        self.x_lo = float(x_lo)
        self.x_hi = float(x_hi)
        self.continuous = continuous
        self._tol = CLAMP_TOLERANCE * self.x_hi
        self._global_support = None

    def __repr__(self):
        return "{}([{}, {}])".format(self.__class__.__name__, self.x_lo,
                                     self.x_hi)

    def window_check(self, x_b):
        """Clamp x_b onto the window.

        :raises OutOfWindow: for sizes further out than the clamp tolerance
        """
        x_b = np.array(x_b, dtype=float)
        lo, hi = self.x_lo - self._tol, self.x_hi + self._tol
        bad = ~((x_b >= lo) & (x_b <= hi))
        if np.any(bad):
            raise OutOfWindow("Initial size {} is outside the window [{}, {}]"
                              .format(x_b[bad].flat[0], self.x_lo, self.x_hi))
        return np.clip(x_b, self.x_lo, self.x_hi)

    def _prepare(self, x_b, a):
        x_b = self.window_check(x_b)
        return np.broadcast_arrays(x_b, np.asarray(a, dtype=float))

    def _support(self, x_b):
        raise NotImplementedError()

    def _density(self, x_b, a):
        raise NotImplementedError()

    def _cdf(self, x_b, a):
        raise NotImplementedError()

    def _sf(self, x_b, a):
        return 1.0 - self._cdf(x_b, a)

    def _ppf(self, x_b, u):
        # bisection on the distribution function
        lo, hi = (np.array(v, dtype=float) for v in self._support(x_b))
        for _ in range(PPF_ITERATIONS):
            mid = 0.5 * (lo + hi)
            below = self._cdf(x_b, mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def support(self, x_b):
        """(a_lo(x_b), a_hi(x_b))"""
        lo, hi = self._support(self.window_check(x_b))
        return _as_output(lo), _as_output(hi)

    def density(self, x_b, a):
        x_b, a = self._prepare(x_b, a)
        lo, hi = self._support(x_b)
        inside = (a > lo) & (a < hi)
        with np.errstate(invalid='ignore', over='ignore'):
            q = np.where(inside, self._density(x_b, a), 0.0)
        return _as_output(np.maximum(np.nan_to_num(q), 0.0))

    def cdf(self, x_b, a):
        x_b, a = self._prepare(x_b, a)
        lo, hi = self._support(x_b)
        with np.errstate(invalid='ignore', over='ignore'):
            c = np.clip(self._cdf(x_b, a), 0.0, 1.0)
        return _as_output(np.where(a <= lo, 0.0, np.where(a >= hi, 1.0, c)))

    def survival(self, x_b, a):
        x_b, a = self._prepare(x_b, a)
        lo, hi = self._support(x_b)
        with np.errstate(invalid='ignore', over='ignore'):
            s = np.clip(self._sf(x_b, a), 0.0, 1.0)
        return _as_output(np.where(a <= lo, 1.0, np.where(a >= hi, 0.0, s)))

    def weight(self, x_b, a):
        """Psi = 1 / Phi.

        :raises SurvivalZero: if Phi < 1e-300 anywhere
        """
        phi = np.asarray(self.survival(x_b, a))
        if np.any(phi < SURVIVAL_FLOOR):
            raise SurvivalZero("Survival vanishes at age {} for x_b={}"
                               .format(a, x_b))
        return _as_output(1.0 / phi)

    def hazard(self, x_b, a):
        """p = q / Phi.

        :raises SurvivalZero: if Phi < 1e-300 anywhere
        """
        phi = np.asarray(self.survival(x_b, a))
        if np.any(phi < SURVIVAL_FLOOR):
            raise SurvivalZero("Hazard diverges at age {} for x_b={}"
                               .format(a, x_b))
        return _as_output(np.asarray(self.density(x_b, a)) / phi)

    def ppf(self, x_b, u):
        """Inverse of the distribution function, inside the support."""
        x_b, u = self._prepare(x_b, u)
        lo, hi = self._support(x_b)
        with np.errstate(invalid='ignore', over='ignore'):
            a = self._ppf(x_b, np.clip(u, 0.0, 1.0))
        return _as_output(np.clip(a, lo, hi))

    sample = ppf

    def _integrate(self, x_b, fn, panels=quadrature.DEFAULT_PANELS,
                   order=quadrature.DEFAULT_ORDER):
        x_b = self.window_check(x_b)
        lo, hi = self._support(x_b)
        nodes, weights = quadrature.composite_gauss_legendre(lo, hi, panels,
                                                             order)
        q = np.asarray(self.density(x_b[..., None], nodes))
        return np.sum(weights * fn(nodes) * q, axis=-1)

    def mean(self, x_b):
        """Mean cycle length of cells born at x_b."""
        return _as_output(self._integrate(x_b, lambda a: a))

    def normalization_error(self, x_b):
        """|integral of q(x_b, .) - 1|"""
        return _as_output(
            np.abs(self._integrate(x_b, lambda a: np.ones_like(a)) - 1.0))

    def global_support(self, n=VALIDATION_NODES):
        """(min a_lo, max a_hi) over a scan of the window."""
        if self._global_support is None:
            lo, hi = self._support(np.linspace(self.x_lo, self.x_hi, n))
            self._global_support = (float(np.min(lo)), float(np.max(hi)))
        return self._global_support

    def mean_cycle_length(self):
        return float(self.mean(0.5 * (self.x_lo + self.x_hi)))


class ConstantDeltaCycle(CycleModel):
    """Division after a size increment Delta with density h, independent of
    x_b: q(x_b, a) = g(pi_a x_b) h(pi_a x_b - x_b)."""

    kind = Kind.CONSTANT_DELTA

    def __init__(self, law, delta):
        if delta.lo <= 0:
            raise ConfigError("Size increment must be positive, support "
                              "starts at {}".format(delta.lo))
        if law.x_hi + delta.hi > law.x_max * (1 + CLAMP_TOLERANCE):
            raise ConfigError(
                "Largest division size {} exceeds the growth domain {}"
                .format(law.x_hi + delta.hi, law.x_max))
        super().__init__(law.x_lo, law.x_hi, delta.continuous)
        self.law = law
        self.delta = delta

    def _support(self, x_b):
        return (np.asarray(self.law.age_between(x_b, x_b + self.delta.lo)),
                np.asarray(self.law.age_between(x_b, x_b + self.delta.hi)))

    def _density(self, x_b, a):
        size = self.law._flow(x_b, a)
        return np.asarray(self.law.g(size)) * self.delta.pdf(size - x_b)

    def _division_size(self, x_b, a):
        lo, hi = self._support(x_b)
        return self.law._flow(x_b, np.clip(a, lo, hi))

    def _cdf(self, x_b, a):
        return self.delta.cdf(self._division_size(x_b, a) - x_b)

    def _sf(self, x_b, a):
        return self.delta.sf(self._division_size(x_b, a) - x_b)

    def _ppf(self, x_b, u):
        return np.asarray(self.law.age_between(x_b,
                                               x_b + self.delta.ppf(u)))


class TargetSizeCycle(CycleModel):
    """Division a random time xi after reaching the target size
    f(x_b) = 2 x_b^(1 - alpha) x0^alpha."""

    kind = Kind.TARGET_SIZE

    def __init__(self, law, alpha, x0, xi):
        if not 0 <= alpha <= 1:
            raise ConfigError("alpha must lie in [0, 1], got {}".format(alpha))
        if x0 <= 0:
            raise ConfigError("Target parameter x0 must be positive")
        super().__init__(law.x_lo, law.x_hi, xi.continuous)
        self.law = law
        self.alpha = float(alpha)
        self.x0 = float(x0)
        self.xi = xi
        xs = np.linspace(law.x_lo, law.x_hi, 65)
        targets = self.target(xs)
        if np.any(targets < law.x_lo) or np.any(targets > law.x_max):
            raise ConfigError("Target sizes [{}, {}] leave the growth domain"
                              .format(targets.min(), targets.max()))
        late = law._flow(xs, self._tau0(xs) + xi.hi)
        if np.any(np.isnan(late)):
            raise ConfigError("Latest divisions leave the growth domain")

    @staticmethod
    def window(kappa, alpha, x0, epsilon):
        """The window [x0 e^(-kappa eps / alpha), x0 e^(kappa eps / alpha)]
        closed under division for exponential growth."""
        if alpha <= 0:
            raise ConfigError("The target size window needs alpha > 0")
        spread = np.exp(kappa * epsilon / alpha)
        return x0 / spread, x0 * spread

    def target(self, x_b):
        x_b = np.asarray(x_b, dtype=float)
        return 2.0 * x_b ** (1.0 - self.alpha) * self.x0 ** self.alpha

    def _tau0(self, x_b):
        return np.asarray(self.law.age_between(x_b, self.target(x_b)))

    def tau0(self, x_b):
        """Time for a cell born at x_b to reach its target size."""
        return _as_output(self._tau0(self.window_check(x_b)))

    def _support(self, x_b):
        tau0 = self._tau0(x_b)
        return tau0 + self.xi.lo, tau0 + self.xi.hi

    def _density(self, x_b, a):
        return self.xi.pdf(a - self._tau0(x_b))

    def _cdf(self, x_b, a):
        return self.xi.cdf(a - self._tau0(x_b))

    def _sf(self, x_b, a):
        return self.xi.sf(a - self._tau0(x_b))

    def _ppf(self, x_b, u):
        return self._tau0(x_b) + self.xi.ppf(u)


class DelayedCycle(CycleModel):
    """q(x_b, a) = q_base(size_factor x_b, a - delay).

    A cell born at x_b first matures for `delay` and then behaves like a
    base cell born at size_factor * x_b.
    """

    kind = Kind.DELAYED

    def __init__(self, base, delay, size_factor, x_lo=None, x_hi=None):
        if delay < 0 or size_factor <= 0:
            raise ConfigError("Delay must be >= 0 and size factor > 0")
        x_lo = base.x_lo / size_factor if x_lo is None else x_lo
        x_hi = base.x_hi / size_factor if x_hi is None else x_hi
        super().__init__(x_lo, x_hi, base.continuous)
        self.base = base
        self.delay = float(delay)
        self.size_factor = float(size_factor)
        try:
            base.window_check([self.x_lo * size_factor,
                               self.x_hi * size_factor])
        except OutOfWindow as e:
            raise ConfigError("Delayed window does not map into the base "
                              "window: {}".format(e))

    def _mapped(self, x_b):
        return np.clip(self.size_factor * x_b, self.base.x_lo,
                       self.base.x_hi)

    def _support(self, x_b):
        lo, hi = self.base._support(self._mapped(x_b))
        return lo + self.delay, hi + self.delay

    def _density(self, x_b, a):
        return self.base._density(self._mapped(x_b), a - self.delay)

    def _cdf(self, x_b, a):
        return self.base._cdf(self._mapped(x_b), a - self.delay)

    def _sf(self, x_b, a):
        return self.base._sf(self._mapped(x_b), a - self.delay)

    def _ppf(self, x_b, u):
        return self.base._ppf(self._mapped(x_b), u) + self.delay


class TabulatedCycle(CycleModel):
    """q on a rectangular grid, bilinear in (x_b, a).

    Each row is renormalised to unit mass on construction (exactly, for the
    piecewise linear interpolant) and the distribution function is the exact
    piecewise quadratic integral of a row.
    """

    kind = Kind.TABULATED

    def __init__(self, x_nodes, a_nodes, table):
        x_nodes = np.array(x_nodes, dtype=float)
        a_nodes = np.array(a_nodes, dtype=float)
        table = np.array(table, dtype=float)
        if (x_nodes.ndim != 1 or a_nodes.ndim != 1 or
                table.shape != (x_nodes.size, a_nodes.size) or
                x_nodes.size < 2 or a_nodes.size < 2):
            raise ConfigError("Tabulated q needs a {}x{} table, got {}"
                              .format(x_nodes.size, a_nodes.size,
                                      table.shape))
        if np.any(np.diff(x_nodes) <= 0) or np.any(np.diff(a_nodes) <= 0):
            raise ConfigError("Tabulated q grids must be strictly increasing")
        if a_nodes[0] < 0:
            raise ConfigError("Tabulated q ages must be non-negative")
        if np.any(~np.isfinite(table)) or np.any(table < 0):
            raise ConfigError("Tabulated q must be finite and non-negative")
        h = np.diff(a_nodes)
        pieces = 0.5 * h * (table[:, :-1] + table[:, 1:])
        mass = pieces.sum(axis=1)
        if np.any(mass <= 0):
            raise ConfigError("Tabulated q has an empty row at x_b={}"
                              .format(x_nodes[np.argmin(mass)]))
        worst = int(np.argmax(np.abs(mass - 1.0)))
        if abs(mass[worst] - 1.0) > RENORMALIZATION_REPORT:
            logger.warning("Tabulated q renormalised: row x_b=%g had mass %g",
                           x_nodes[worst], mass[worst])
        table = table / mass[:, None]
        pieces = pieces / mass[:, None]
        positive = table > 0
        first = np.clip(np.argmax(positive, axis=1) - 1, 0, None)
        last = np.clip(a_nodes.size - np.argmax(positive[:, ::-1], axis=1),
                       None, a_nodes.size - 1)
        continuous = bool(np.all(table[:, 0] == 0) and
                          np.all(table[:, -1] == 0))
        super().__init__(x_nodes[0], x_nodes[-1], continuous)
        self.x_nodes = x_nodes
        self.a_nodes = a_nodes
        self.table = table
        self.renormalization = mass
        self._h = h
        self._cumulative = np.concatenate(
            (np.zeros((x_nodes.size, 1)), np.cumsum(pieces, axis=1)), axis=1)
        self._row_lo = a_nodes[first]
        self._row_hi = a_nodes[last]

    @classmethod
    def from_csv(cls, path):
        """Read a CSV with header x_b,a,q on a rectangular grid, row-major in
        x_b.

        :raises ConfigError: if the file can't be read or isn't rectangular
        """
        try:
            data = np.loadtxt(path, delimiter=',', comments='#', skiprows=1,
                              ndmin=2)
        except (OSError, ValueError) as e:
            raise ConfigError("Can't read tabulated q '{}': {}"
                              .format(path, e))
        if data.shape[1] != 3:
            raise ConfigError("Tabulated q '{}' needs columns x_b,a,q"
                              .format(path))
        x_nodes = np.unique(data[:, 0])
        a_nodes = np.unique(data[:, 1])
        if data.shape[0] != x_nodes.size * a_nodes.size:
            raise ConfigError("Tabulated q '{}' is not a rectangular grid"
                              .format(path))
        order = np.lexsort((data[:, 1], data[:, 0]))
        table = data[order, 2].reshape(x_nodes.size, a_nodes.size)
        return cls(x_nodes, a_nodes, table)

    def _locate(self, x_b):
        i = np.clip(np.searchsorted(self.x_nodes, x_b, side='right') - 1,
                    0, self.x_nodes.size - 2)
        w = np.clip((x_b - self.x_nodes[i]) /
                    (self.x_nodes[i + 1] - self.x_nodes[i]), 0.0, 1.0)
        return i, w

    def _support(self, x_b):
        i, w = self._locate(x_b)
        lo0, lo1 = self._row_lo[i], self._row_lo[i + 1]
        hi0, hi1 = self._row_hi[i], self._row_hi[i + 1]
        lo = np.where(w == 0, lo0,
                      np.where(w == 1, lo1, np.minimum(lo0, lo1)))
        hi = np.where(w == 0, hi0,
                      np.where(w == 1, hi1, np.maximum(hi0, hi1)))
        return lo, hi

    def _cell(self, a):
        k = np.clip(np.searchsorted(self.a_nodes, a, side='right') - 1,
                    0, self.a_nodes.size - 2)
        return k, np.clip(a - self.a_nodes[k], 0.0, self._h[k])

    def _row_density(self, i, a):
        k, s = self._cell(a)
        t = s / self._h[k]
        value = (1 - t) * self.table[i, k] + t * self.table[i, k + 1]
        return np.where((a < self.a_nodes[0]) | (a > self.a_nodes[-1]),
                        0.0, value)

    def _row_cdf(self, i, a):
        k, s = self._cell(a)
        q0 = self.table[i, k]
        q1 = self.table[i, k + 1]
        value = (self._cumulative[i, k] + q0 * s +
                 (q1 - q0) * s * s / (2.0 * self._h[k]))
        return np.where(a < self.a_nodes[0], 0.0,
                        np.where(a >= self.a_nodes[-1], 1.0, value))

    def _density(self, x_b, a):
        i, w = self._locate(x_b)
        return (1 - w) * self._row_density(i, a) + w * self._row_density(
            i + 1, a)

    def _cdf(self, x_b, a):
        i, w = self._locate(x_b)
        return (1 - w) * self._row_cdf(i, a) + w * self._row_cdf(i + 1, a)


class GrowthRateDistribution(object):
    """Conditional density k(r | x_b) of the individual growth rate.

    :param density: density(r, x_b) -> array
    :param quantile: quantile(u, x_b) -> array
    :param lo, hi: bounds of the support (lo > 0)
    """

    def __init__(self, density, quantile, lo, hi):
        if not 0 < lo < hi:
            raise ConfigError("Growth rate support needs 0 < lo < hi")
        self._density_fn = density
        self._quantile_fn = quantile
        self.lo = float(lo)
        self.hi = float(hi)

    @classmethod
    def independent(cls, base):
        """Growth rates independent of x_b, distributed as base."""
        return cls(lambda r, x_b: base.pdf(r), lambda u, x_b: base.ppf(u),
                   base.lo, base.hi)

    @classmethod
    def default(cls, mean, cv=0.15):
        """Truncated normal with sd = cv * mean, truncated at 2.5 sd."""
        if mean <= 0 or not 0 < cv < 0.4:
            raise ConfigError("Growth rate needs mean > 0 and 0 < cv < 0.4")
        sd = cv * mean
        return cls.independent(ScalarDensity.truncnorm(
            mean - 2.5 * sd, mean + 2.5 * sd, mean=mean, sd=sd))

    def density(self, r, x_b):
        return _as_output(self._density_fn(np.asarray(r, dtype=float),
                                           np.asarray(x_b, dtype=float)))

    def sample(self, x_b, u):
        return _as_output(np.clip(
            self._quantile_fn(np.asarray(u, dtype=float),
                              np.asarray(x_b, dtype=float)),
            self.lo, self.hi))

    def mean(self, x_b):
        nodes, weights = quadrature.composite_gauss_legendre(self.lo,
                                                             self.hi)
        return float(np.sum(weights * nodes *
                            np.asarray(self.density(nodes, x_b))))


def density_q(model, x_b, a):
    return model.density(x_b, a)


def survival_phi(model, x_b, a):
    return model.survival(x_b, a)


def weight_psi(model, x_b, a):
    return model.weight(x_b, a)


def hazard_p(model, x_b, a):
    return model.hazard(x_b, a)


def sample_tau(model, x_b, u01):
    return model.sample(x_b, u01)


def mean_cycle_length(model):
    return model.mean_cycle_length()


def growth_rate_birth_density(dist, x, x_b, a):
    """Density in x of the size x_b e^(kappa a) at age a when kappa ~ k."""
    x = np.asarray(x, dtype=float)
    x_b = np.asarray(x_b, dtype=float)
    a = np.asarray(a, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        rate = np.log(x / x_b) / a
        value = np.asarray(dist.density(rate, x_b)) / (a * x)
    return _as_output(np.where((x > x_b) & (a > 0), np.nan_to_num(value),
                               0.0))


Check = collections.namedtuple('Check',
                               'name status worst_x worst_value note')


class AssumptionReport(object):
    """Result of validate_assumptions() or validate_hetero().

    ok is False when any check failed; WARN checks (A7, type ordering) don't
    affect it.
    """

    def __init__(self, checks):
        self.checks = tuple(checks)

    @property
    def ok(self):
        return not self.failures

    @property
    def failures(self):
        return [c for c in self.checks if c.status == Status.FAIL]

    @property
    def warnings(self):
        return [c for c in self.checks if c.status == Status.WARN]

    def get(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def rows(self):
        """(assumption, status, worst_x, worst_value) tuples."""
        return [(c.name, c.status.name.lower(), c.worst_x, c.worst_value)
                for c in self.checks]

    def to_text(self):
        lines = []
        for c in self.checks:
            line = "{:<10} {:<5} worst x={:.6g} value={:.6g}".format(
                c.name, c.status.name.lower(), c.worst_x, c.worst_value)
            if c.note:
                line += "  ({})".format(c.note)
            lines.append(line)
        lines.append("assumptions A1-A6: {}"
                     .format("ok" if self.ok else "VIOLATED"))
        return "\n".join(lines)

    def __repr__(self):
        return "AssumptionReport(ok={}, {} checks)".format(self.ok,
                                                           len(self.checks))


def _status(passed, soft=False):
    if passed:
        return Status.PASS
    return Status.WARN if soft else Status.FAIL


def _check_growth(law, name='A1'):
    xs = np.linspace(law.x_lo, law.x_max, 4 * VALIDATION_NODES)
    values = np.asarray(law.g(xs))
    k = int(np.argmin(np.where(np.isfinite(values), values, -np.inf)))
    note = 'C1 by monotone cubic' if law.kind.name == 'TABULATED' else ''
    return Check(name, _status(np.all(np.isfinite(values)) and values[k] > 0),
                 xs[k], values[k], note)


def _check_normalization(model, xs, name='A2'):
    errors = np.asarray(model.normalization_error(xs))
    k = int(np.argmax(errors))
    return Check(name, _status(errors[k] < NORMALIZATION_TOLERANCE), xs[k],
                 errors[k], '')


def _check_support(model, xs, name='A3'):
    lo, hi = model.support(xs)
    lo, hi = np.asarray(lo), np.asarray(hi)
    sane = np.isfinite(lo) & np.isfinite(hi) & (lo > 0) & (hi > lo)
    fractions = (np.arange(64) + 0.5) / 64
    ages = lo[:, None] + (hi - lo)[:, None] * fractions
    q = np.asarray(model.density(xs[:, None], ages))
    smallest = np.where(sane, q.min(axis=1), -np.inf)
    k = int(np.argmin(smallest))
    note = '' if model.continuous else 'continuity not verified'
    return Check(name, _status(np.all(sane) and smallest[k] > 0), xs[k],
                 min(float(lo[k]), float(smallest[k])), note)


def _check_support_continuity(model, xs, name='A4'):
    lo, hi = model.support(xs)
    lo, hi = np.asarray(lo), np.asarray(hi)
    jumps = np.maximum(np.abs(np.diff(lo)), np.abs(np.diff(hi)))
    k = int(np.argmax(jumps))
    scale = float(np.min(hi - lo))
    return Check(name, _status(jumps[k] <= 0.1 * scale), xs[k], jumps[k], '')


def validate_assumptions(law, model, n=VALIDATION_NODES):
    """Check (A1)-(A7) for a single type model on n window nodes.

    A1 g > 0 on [x_lo, x_max]; A2 q is a probability density; A3 q > 0
    exactly inside a support with 0 < a_lo < a_hi; A4 continuous support
    bounds; A5 daughters stay in the window; A6 the smallest and largest
    daughters bracket x_b; A7 g(2x) != 2g(x) somewhere (warning only).
    """
    xs = np.linspace(model.x_lo, model.x_hi, n)
    checks = [_check_growth(law), _check_normalization(model, xs),
              _check_support(model, xs), _check_support_continuity(model, xs)]

    lo, hi = model.support(xs)
    small = np.asarray(law._flow(xs, lo)) / 2
    large = np.asarray(law._flow(xs, hi)) / 2
    tol = CLAMP_TOLERANCE * model.x_hi
    margin = np.minimum(np.nan_to_num(small - model.x_lo, nan=-np.inf),
                        np.nan_to_num(model.x_hi - large, nan=-np.inf))
    k = int(np.argmin(margin))
    checks.append(Check('A5', _status(margin[k] >= -tol), xs[k], margin[k],
                        ''))

    inner = slice(1, n - 1)
    gap = np.minimum(np.nan_to_num(xs - small, nan=-np.inf),
                     np.nan_to_num(large - xs, nan=-np.inf))[inner]
    k = int(np.argmin(gap))
    checks.append(Check('A6', _status(gap[k] > 0), xs[inner][k], gap[k], ''))

    mismatch = np.abs(np.asarray(law.g(2 * xs)) - 2 * np.asarray(law.g(xs)))
    scale = float(np.max(np.abs(law.g(xs))))
    k = int(np.argmax(mismatch))
    a7 = Check('A7', _status(mismatch[k] > CLAMP_TOLERANCE * scale,
                             soft=True),
               xs[k], mismatch[k],
               '' if mismatch[k] > CLAMP_TOLERANCE * scale else
               'g(2x) = 2g(x): no asynchronous exponential growth')
    if a7.status == Status.WARN:
        logger.warning("A7 fails for %r: g(2x) = 2g(x) on the window", law)
    checks.append(a7)
    return AssumptionReport(checks)


def validate_hetero(rule, n=VALIDATION_NODES):
    """Checks for a multi-type rule: per type growth and cycle checks,
    division matrices, window closure (every daughter lands in its own
    type's window) and, for two types, the slow/fast ordering (warning)."""
    checks = []
    rows = np.abs(rule.r.sum(axis=1) - 1.0)
    checks.append(Check('r_rows', _status(np.all(rows <= 1e-12)), 0.0,
                        float(rows.max()), ''))
    closest = float(np.min(np.minimum(rule.beta, 1.0 - rule.beta)))
    checks.append(Check('beta', _status(closest > 0), 0.0, closest, ''))
    for i, (law, model) in enumerate(zip(rule.laws, rule.models)):
        xs = np.linspace(model.x_lo, model.x_hi, n)
        suffix = '[{}]'.format(i + 1)
        checks.append(_check_growth(law, 'A1' + suffix))
        checks.append(_check_normalization(model, xs, 'A2' + suffix))
        checks.append(_check_support(model, xs, 'A3' + suffix))
        lo, hi = model.support(xs)
        first = np.asarray(law._flow(xs, lo))
        last = np.asarray(law._flow(xs, hi))
        for j, target in enumerate(rule.models):
            if rule.r[i, j] == 0:
                continue
            tol = CLAMP_TOLERANCE * target.x_hi
            smallest = rule.beta[i, j] * first
            largest = rule.beta[i, j] * last
            margin = np.minimum(
                np.nan_to_num(smallest - target.x_lo, nan=-np.inf),
                np.nan_to_num(target.x_hi - largest, nan=-np.inf))
            k = int(np.argmin(margin))
            checks.append(Check('window{}->{}'.format(i + 1, j + 1),
                                _status(margin[k] >= -tol), xs[k],
                                margin[k], ''))
    if rule.n_types == 2:
        checks.append(_check_ordering(rule, n))
    return AssumptionReport(checks)


def _check_ordering(rule, n):
    slow, fast = rule.models
    x_lo = max(slow.x_lo, fast.x_lo)
    x_hi = min(slow.x_hi, fast.x_hi)
    if not x_lo < x_hi:
        return Check('order', Status.WARN, 0.0, 0.0,
                     'windows are disjoint, ordering not checked')
    xs = np.linspace(x_lo, x_hi, n)
    top = min(rule.laws[0].x_max, rule.laws[1].x_max)
    sizes = np.linspace(max(rule.laws[0].x_lo, rule.laws[1].x_lo), top, n)
    growth_gap = np.asarray(rule.laws[1].g(sizes)) - np.asarray(
        rule.laws[0].g(sizes))
    a_hi = slow.global_support()[1]
    ages = np.linspace(0.0, a_hi, 64)[1:-1]
    cdf_gap = (np.asarray(fast.cdf(xs[:, None], ages)) -
               np.asarray(slow.cdf(xs[:, None], ages)))
    worst = min(float(growth_gap.min()), float(cdf_gap.min()))
    ordered = growth_gap.min() > 0 and cdf_gap.min() > 0
    note = '' if ordered else 'types are not ordered slow/fast'
    return Check('order', _status(ordered, soft=True), x_lo, worst, note)

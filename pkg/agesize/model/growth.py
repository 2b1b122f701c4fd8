"""Single cell growth: the flow of x' = g(x) and the maps derived from it.

Every law is described through its potential

    T(x) = integral from x_lo to x of dr / g(r),

the age a cell starting at x_lo needs to reach size x.  The flow is then
pi_a x = T^-1(T(x) + a) and the cycle age is a(y; x_b) = T(2y) - T(x_b).
Exponential and affine laws use closed forms; tabulated and dyadic laws use
dense output Runge-Kutta solutions of T' = 1/g and X' = g.

Sizes live on the growth domain [x_lo, x_max] (x_max defaults to 2 x_hi).
Sizes within CLAMP_TOLERANCE * x_hi outside it are clamped, anything further
out raises DomainExit.
"""

import enum
import logging
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator

from agesize.core.exceptions import (
    BadAge,
    ConfigError,
    DomainExit,
    NonPositiveG,
)

logger = logging.getLogger(__name__)

Kind = enum.Enum('Kind', 'EXPONENTIAL AFFINE TABULATED DYADIC')

CLAMP_TOLERANCE = 1e-9
ODE_TOLERANCE = 1e-10


def _as_output(value):
    value = np.asarray(value)
    if value.ndim == 0:
        return float(value)
    return value


class GrowthLaw(object):
    """A growth field g > 0 on [x_lo, x_max] with its flow.

    Build one with the classmethods exponential(), affine(), tabulated() and
    dyadic().  Instances are immutable after construction.
    """

    def __init__(self, kind, x_lo, x_hi, x_max=None, **params):
        if not 0 < x_lo < x_hi:
            raise ConfigError("Size window needs 0 < x_lo < x_hi, got [{}, {}]"
                              .format(x_lo, x_hi))
        if x_max is None:
            x_max = 2.0 * x_hi
        if x_max < 2.0 * x_hi * (1 - CLAMP_TOLERANCE):
            raise ConfigError("Growth domain must reach 2 * x_hi = {}, got {}"
                              .format(2.0 * x_hi, x_max))
        self.kind = kind
        self.x_lo = float(x_lo)
        self.x_hi = float(x_hi)
        self.x_max = float(x_max)
        self.params = params
        self._tol = CLAMP_TOLERANCE * self.x_hi
        self._t_solution = None
        self._x_solution = None
        self._check_positive()
        if kind in (Kind.TABULATED, Kind.DYADIC):
            self._build_potential()

    @classmethod
    def exponential(cls, kappa, x_lo, x_hi, x_max=None):
        return cls(Kind.EXPONENTIAL, x_lo, x_hi, x_max, kappa=float(kappa))

    @classmethod
    def affine(cls, kappa, beta, x_lo, x_hi, x_max=None):
        return cls(Kind.AFFINE, x_lo, x_hi, x_max, kappa=float(kappa),
                   beta=float(beta))

    @classmethod
    def tabulated(cls, sizes, rates, x_lo, x_hi, x_max=None):
        """g given by samples, interpolated with a monotone cubic.

        :raises ConfigError: if the samples don't cover [x_lo, x_max]
        :raises NonPositiveG: if a sampled rate is <= 0
        """
        sizes = np.asarray(sizes, dtype=float)
        rates = np.asarray(rates, dtype=float)
        if sizes.ndim != 1 or sizes.shape != rates.shape or sizes.size < 2:
            raise ConfigError("Tabulated g needs two equal length 1-D arrays")
        if np.any(np.diff(sizes) <= 0):
            raise ConfigError("Tabulated g sizes must be strictly increasing")
        if np.any(~np.isfinite(rates)) or np.any(rates <= 0):
            k = int(np.argmin(np.where(np.isfinite(rates), rates, -np.inf)))
            raise NonPositiveG("Tabulated g is not positive at x={} (g={})"
                               .format(sizes[k], rates[k]))
        top = 2.0 * x_hi if x_max is None else x_max
        tol = CLAMP_TOLERANCE * x_hi
        if sizes[0] > x_lo + tol or sizes[-1] < top - tol:
            raise ConfigError("Tabulated g covers [{}, {}], needs [{}, {}]"
                              .format(sizes[0], sizes[-1], x_lo, top))
        return cls(Kind.TABULATED, x_lo, x_hi, x_max,
                   interpolant=PchipInterpolator(sizes, rates),
                   sizes=sizes, rates=rates)

    @classmethod
    def dyadic(cls, seed, x_lo, x_hi, x_max=None):
        """g(x) = 2^n seed(2^-n x) with 2^-n x in [x_lo, 2 x_lo)."""
        if not callable(seed):
            raise ConfigError("A dyadic law needs a callable seed")
        return cls(Kind.DYADIC, x_lo, x_hi, x_max, seed=seed)

    @property
    def kappa(self):
        return self.params.get('kappa')

    def __repr__(self):
        shown = {k: v for k, v in self.params.items()
                 if isinstance(v, float)}
        return ("GrowthLaw({}, [{}, {}], x_max={}, {})"
                .format(self.kind.name.lower(), self.x_lo, self.x_hi,
                        self.x_max, shown))

    def g(self, x):
        """The growth rate at size x (vectorised, no domain check)."""
        x = np.asarray(x, dtype=float)
        if self.kind == Kind.EXPONENTIAL:
            value = self.params['kappa'] * x
        elif self.kind == Kind.AFFINE:
            value = self.params['kappa'] * x + self.params['beta']
        elif self.kind == Kind.TABULATED:
            value = self.params['interpolant'](x)
        else:
            n = np.floor(np.log2(x / self.x_lo))
            scale = np.exp2(n)
            value = scale * np.asarray(self.params['seed'](x / scale),
                                       dtype=float)
        return _as_output(value)

    def _check_positive(self):
        xs = np.linspace(self.x_lo, self.x_max, 1025)
        values = np.asarray(self.g(xs))
        bad = ~np.isfinite(values) | (values <= 0)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise NonPositiveG("g is not positive at x={} (g={})"
                               .format(xs[k], values[k]))

    def _rate(self, x):
        value = float(self.g(x))
        if not value > 0:
            raise NonPositiveG("g is not positive at x={} (g={})"
                               .format(x, value))
        return value

    def _build_potential(self):
        options = dict(method='RK45', rtol=ODE_TOLERANCE, atol=ODE_TOLERANCE,
                       dense_output=True)
        t_run = solve_ivp(lambda x, t: [1.0 / self._rate(x)],
                          (self.x_lo, self.x_max), [0.0], **options)
        if not t_run.success:
            raise ConfigError("Potential of g could not be integrated: {}"
                              .format(t_run.message))
        self._t_solution = t_run.sol
        self._t_max = float(t_run.y[0, -1])
        x_run = solve_ivp(lambda s, x: [self._rate(x[0])],
                          (0.0, self._t_max), [self.x_lo], **options)
        if not x_run.success:
            raise ConfigError("Flow of g could not be integrated: {}"
                              .format(x_run.message))
        self._x_solution = x_run.sol
        logger.debug("Built potential for %r: T(x_max)=%g (%d + %d steps)",
                     self, self._t_max, t_run.t.size, x_run.t.size)

    def _domain(self, x, strict=True):
        """Clamp x onto [x_lo, x_max]; values further out raise DomainExit
        (strict) or become nan."""
        x = np.array(x, dtype=float)
        bad = ~((x >= self.x_lo - self._tol) & (x <= self.x_max + self._tol))
        if np.any(bad):
            if strict:
                raise DomainExit(
                    "Size {} is outside the growth domain [{}, {}]"
                    .format(x[bad].flat[0], self.x_lo, self.x_max))
            x[bad] = np.nan
        return np.clip(x, self.x_lo, self.x_max)

    def _potential(self, x):
        # x already in the domain (or nan)
        if self.kind == Kind.EXPONENTIAL:
            return np.log(x / self.x_lo) / self.params['kappa']
        if self.kind == Kind.AFFINE:
            kappa, beta = self.params['kappa'], self.params['beta']
            if kappa == 0:
                return (x - self.x_lo) / beta
            c = beta / kappa
            return np.log((x + c) / (self.x_lo + c)) / kappa
        out = np.full(x.shape, np.nan)
        ok = np.isfinite(x)
        out[ok] = self._t_solution(x[ok])[0]
        return out

    def _inverse_potential(self, s):
        if self.kind == Kind.EXPONENTIAL:
            return self.x_lo * np.exp(self.params['kappa'] * s)
        if self.kind == Kind.AFFINE:
            kappa, beta = self.params['kappa'], self.params['beta']
            if kappa == 0:
                return self.x_lo + beta * s
            c = beta / kappa
            return (self.x_lo + c) * np.exp(kappa * s) - c
        out = np.full(s.shape, np.nan)
        slack_lo = self._tol / float(self.g(self.x_lo))
        slack_hi = self._tol / float(self.g(self.x_max))
        ok = (s >= -slack_lo) & (s <= self._t_max + slack_hi)
        out[ok] = self._x_solution(np.clip(s[ok], 0.0, self._t_max))[0]
        return out

    def potential(self, x):
        """Age needed to grow from x_lo to x.

        :raises DomainExit: if x is outside the growth domain
        """
        return _as_output(self._potential(self._domain(x)))

    def inverse_potential(self, s):
        s = np.asarray(s, dtype=float)
        x = self._domain(self._inverse_potential(s), strict=False)
        if np.any(np.isnan(x) & ~np.isnan(s)):
            raise DomainExit("Age {} leaves the growth domain".format(s))
        return _as_output(x)

    def _flow(self, x, a):
        """Vectorised flow; nan where the start or end leaves the domain."""
        x, a = np.broadcast_arrays(self._domain(x, strict=False),
                                   np.asarray(a, dtype=float))
        s = self._potential(x) + a
        with np.errstate(invalid='ignore', over='ignore'):
            y = self._domain(self._inverse_potential(s), strict=False)
        return np.where(a == 0, x, y)

    def flow(self, x, a):
        """pi_a x, the size at age a of a cell of size x (a may be < 0).

        :raises DomainExit: if the trajectory leaves [x_lo, x_max]
        """
        x_in = np.asarray(x, dtype=float)
        y = self._flow(x_in, a)
        if np.any(np.isnan(y)):
            raise DomainExit("Flow from size {} over age {} leaves [{}, {}]"
                             .format(x, a, self.x_lo, self.x_max))
        return _as_output(y)

    def age_between(self, x, y):
        """Age needed to grow from x to y (negative when y < x)."""
        return _as_output(self._potential(self._domain(y)) -
                          self._potential(self._domain(x)))

    def daughter_size(self, x_b, a):
        return _as_output(0.5 * np.asarray(self.flow(x_b, a)))

    def cycle_age(self, y, x_b):
        return self.age_between(x_b, 2.0 * np.asarray(y, dtype=float))

    def jacobian_factor(self, x_b, a):
        top = 2.0 * np.asarray(x_b, dtype=float)
        mother = self.flow(top, -np.asarray(a, dtype=float))
        return _as_output(2.0 * np.asarray(self.g(mother)) /
                          np.asarray(self.g(top)))

    def is_homogeneous(self, rtol=CLAMP_TOLERANCE, n=257):
        """True if g(2x) = 2g(x) on a grid over (x_lo, x_hi)."""
        xs = np.linspace(self.x_lo, self.x_hi, n)
        lhs = np.asarray(self.g(2.0 * xs))
        rhs = 2.0 * np.asarray(self.g(xs))
        return bool(np.all(np.abs(lhs - rhs) <= rtol * np.abs(rhs)))


def flow(law, x, a):
    return law.flow(x, a)


def daughter_size(law, x_b, a):
    return law.daughter_size(x_b, a)


def cycle_age(law, y, x_b):
    return law.cycle_age(y, x_b)


def jacobian_factor(law, x_b, a):
    return law.jacobian_factor(x_b, a)


def min_split_size(law, cycle, a):
    """Smallest initial size of a mother that divides at age a into a
    daughter inside the window.

    :param cycle: OPTIONAL CycleModel; ages outside its global support are
        rejected
    :raises BadAge: a < 0, or a outside the cycle's global support
    :raises DomainExit: if the flows leave the growth domain
    """
    if a < 0:
        raise BadAge("Age must be non-negative, got {}".format(a))
    if cycle is not None:
        a_lo, a_hi = cycle.global_support()
        if not a_lo <= a <= a_hi:
            raise BadAge("Age {} is outside the cycle support [{}, {}]"
                         .format(a, a_lo, a_hi))
    if law.daughter_size(law.x_lo, a) >= law.x_lo:
        return law.x_lo
    return law.flow(2.0 * law.x_lo, -a)


def _as_function(f, nodes):
    if callable(f):
        return f
    values = np.asarray(f, dtype=float)
    return PchipInterpolator(np.asarray(nodes, dtype=float), values,
                             extrapolate=True)


def perron_apply(law, cycle, f, a, nodes):
    """The Frobenius-Perron operator P_a applied to f, at the given nodes.

    P_a f(x_b) = jacobian_factor(x_b, a) f(pi_-a(2 x_b)) where the mother
    size pi_-a(2 x_b) lies in the window, and 0 elsewhere.  P_a is the zero
    operator for ages outside the cycle's global support.

    :param f: a vectorised function of size, or values at nodes
    :param nodes: sizes to evaluate at
    :raises BadAge: if a < 0
    """
    if a < 0:
        raise BadAge("Age must be non-negative, got {}".format(a))
    nodes = np.asarray(nodes, dtype=float)
    if cycle is not None:
        a_lo, a_hi = cycle.global_support()
        if not a_lo < a < a_hi:
            return np.zeros_like(nodes)
    fn = _as_function(f, nodes)
    top = 2.0 * nodes
    mother = law._flow(top, -a)
    lowest = min_split_size(law, None, a)
    ok = (np.isfinite(mother) & (mother >= lowest - law._tol) &
          (mother <= law.x_hi + law._tol))
    out = np.zeros_like(nodes)
    if np.any(ok):
        y = np.clip(mother[ok], law.x_lo, law.x_hi)
        jac = 2.0 * np.asarray(law.g(y)) / np.asarray(law.g(top[ok]))
        out[ok] = jac * np.asarray(fn(y), dtype=float)
    return out


def dyadic_seed(name, kappa, x_lo, delta=0.0):
    """Named seeds on [x_lo, 2 x_lo] for GrowthLaw.dyadic().

    'linear' is kappa * x; 'wavy' is kappa * x * (1 + delta * sin(theta))
    with theta = 2 pi log2(x / x_lo), which matches value and slope at both
    ends of the seed interval.

    :returns: (seed, derivative)
    :raises ConfigError: for unknown names or too large delta
    """
    kappa = float(kappa)
    if name == 'linear':
        return (lambda x: kappa * np.asarray(x, dtype=float),
                lambda x: np.full(np.shape(x), kappa))
    if name == 'wavy':
        bound = 1.0 / (1.0 + 2.0 * math.pi / math.log(2.0))
        if not abs(delta) < bound:
            raise ConfigError("Wavy seed needs |delta| < {:.6f}, got {}"
                              .format(bound, delta))
        omega = 2.0 * math.pi / math.log(2.0)

        def seed(x):
            x = np.asarray(x, dtype=float)
            theta = omega * np.log(x / x_lo)
            return kappa * x * (1.0 + delta * np.sin(theta))

        def derivative(x):
            x = np.asarray(x, dtype=float)
            theta = omega * np.log(x / x_lo)
            return kappa * (1.0 + delta * np.sin(theta) +
                            delta * omega * np.cos(theta))

        return seed, derivative
    raise ConfigError("Unknown dyadic seed '{}' (known: linear, wavy)"
                      .format(name))


class HeteroDivisionRule(object):
    """Multi-type division: a daughter of a type i mother is of type j with
    probability r[i, j] and has initial size beta[i, j] times the mother's
    size at division."""

    def __init__(self, r, beta, laws, models, pairing=False):
        r = np.array(r, dtype=float)
        beta = np.array(beta, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1] or r.shape != beta.shape:
            raise ConfigError("r and beta must be square matrices of the same "
                              "shape, got {} and {}"
                              .format(r.shape, beta.shape))
        n = r.shape[0]
        if len(laws) != n or len(models) != n:
            raise ConfigError("Need {} growth laws and cycle models".format(n))
        if np.any(r < 0) or np.any(np.abs(r.sum(axis=1) - 1.0) > 1e-12):
            raise ConfigError("Rows of r must be probability vectors: {}"
                              .format(r.tolist()))
        if np.any(beta <= 0) or np.any(beta >= 1):
            raise ConfigError("Size fractions beta must lie in (0, 1): {}"
                              .format(beta.tolist()))
        if pairing and (n != 2 or np.any(r != 0.5)):
            raise ConfigError("Pairing needs two types with r_ij = 1/2")
        r.flags.writeable = False
        beta.flags.writeable = False
        self.r = r
        self.beta = beta
        self.laws = tuple(laws)
        self.models = tuple(models)
        self.pairing = bool(pairing)
        self.n_types = n

    def __repr__(self):
        return ("HeteroDivisionRule(r={}, beta={}, pairing={})"
                .format(self.r.tolist(), self.beta.tolist(), self.pairing))


def hetero_daughter_size(rule, i, j, x_b, a):
    """beta_ij times the size at age a of a type i cell born at x_b."""
    return _as_output(rule.beta[i, j] *
                      np.asarray(rule.laws[i].flow(x_b, a)))


def hetero_density_factor(rule, i, j, x_b, a):
    """Density factor of P^ij_a at x_b, and the mother's initial size.

    :returns: (factor, mother) with
        factor = r_ij / beta_ij * g_i(mother) / g_i(x_b / beta_ij)
    :raises DomainExit: if the backward flow leaves type i's domain
    """
    law = rule.laws[i]
    top = np.asarray(x_b, dtype=float) / rule.beta[i, j]
    mother = np.asarray(law.flow(top, -np.asarray(a, dtype=float)))
    factor = (rule.r[i, j] / rule.beta[i, j] *
              np.asarray(law.g(mother)) / np.asarray(law.g(top)))
    return _as_output(factor), _as_output(mother)


def hetero_perron_apply(rule, i, j, f, a, nodes):
    """P^ij_a f at nodes, where f is a density on type i's window."""
    if a < 0:
        raise BadAge("Age must be non-negative, got {}".format(a))
    law = rule.laws[i]
    nodes = np.asarray(nodes, dtype=float)
    fn = _as_function(f, nodes)
    top = nodes / rule.beta[i, j]
    mother = law._flow(top, -a)
    ok = (np.isfinite(mother) & (mother >= law.x_lo - law._tol) &
          (mother <= law.x_hi + law._tol))
    out = np.zeros_like(nodes)
    if np.any(ok):
        y = np.clip(mother[ok], law.x_lo, law.x_hi)
        out[ok] = (rule.r[i, j] / rule.beta[i, j] *
                   np.asarray(law.g(y)) / np.asarray(law.g(top[ok])) *
                   np.asarray(fn(y), dtype=float))
    return out

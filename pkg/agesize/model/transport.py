"""Time evolution of the transported density z = u Psi.

With the time step equal to the age step, z moves one age level per step
without any numerical diffusion.  The new a = 0 level collects the daughters
of the cells dividing at every other level: mothers sit on the grid nodes,
divide with weight 2 q(x_b, a_k) da and each daughter size S_a_k x_b is
shared between its two nearest nodes.  This is the transpose of the level
rule operator of agesize.model.spectral, so a solution computed with
age_rule='levels' is preserved by the stepping: the conserved functional
C(t) only moves by rounding.  The levels are kept in a ring buffer of node
columns.
"""

import logging
import math

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.stats import linregress

from agesize.core.exceptions import ConfigError, SeedMismatch
from agesize.model import quadrature
from agesize.model import spectral as spectral_module
from agesize.model.growth import CLAMP_TOLERANCE, GrowthLaw

logger = logging.getLogger(__name__)

INITIAL_PRESETS = ('eigen', 'newborn', 'young', 'skewed')
DEFAULT_HORIZON_CYCLES = 20
STEADY_TOLERANCE = 0.01


class RenewalBoundary(object):
    """The births at a = 0 as a sparse sum over (mother node, level)
    entries, everything but z precomputed."""

    def __init__(self, law, model, grid, ages):
        op = spectral_module.RenewalOperator(law, model, grid, check=False,
                                             ages=ages)
        w = grid.weights
        self.n = grid.n
        self.mothers = op.mothers
        self.daughters = op.daughters
        self.levels = op.levels
        self.coef = op.base * w[op.mothers] / w[op.daughters]
        logger.debug("Renewal boundary uses %d of %d age levels",
                     np.unique(self.levels).size, ages.levels)

    def births(self, values, rows):
        """Births at the node sizes.

        :param values: ring of node columns (levels x n)
        :param rows: ring row of each age level
        """
        z = values[rows[self.levels], self.mothers]
        return np.bincount(self.daughters, weights=self.coef * z,
                           minlength=self.n)


class TransportState(object):
    """z on grid nodes x age levels at time t.  Owned by whoever steps it."""

    def __init__(self, law, model, grid, ages, z0):
        self.law = law
        self.model = model
        self.grid = grid
        self.ages = ages
        self.dz = ages.da
        self.t = 0.0
        self.steps = 0
        a_hi = np.asarray(model.support(grid.nodes)[1])
        self.mask = ages.mask(a_hi)
        self._last = np.sum(self.mask, axis=1) - 1
        self.phi = spectral_module.survival_table(model, grid, ages)
        self.boundary = RenewalBoundary(law, model, grid, ages)
        levels = ages.levels
        self._values = np.zeros((levels, grid.n))
        self._head = 0
        for k in range(levels):
            self._values[(-k) % levels] = z0[:, k]
        self.births = np.zeros(grid.n)
        self.outflow = 0.0

    def _rows(self):
        return (self._head - np.arange(self.ages.levels)) % self.ages.levels

    @property
    def z(self):
        """Masked z table (nodes x levels)."""
        return np.where(self.mask, self._values[self._rows()].T, 0.0)

    @property
    def u(self):
        return self.z * self.phi

    def total(self):
        return quadrature.integrate_table(self.grid, self.ages, self.z)

    def __repr__(self):
        return "TransportState(t={:.6g}, steps={})".format(self.t, self.steps)


def initial_density(name, law, model, grid, ages, spectral=None):
    """A named initial density u0 on the table.

    eigen    Phi f_i (needs the spectral solution)
    newborn  unit mass of shape f_tilde (or uniform) on the a = 0 level
    young    uniform on ages below a_lo(x_b), unit mass
    skewed   like young, weighted by (x_b - x_lo)^2
    """
    n, levels = grid.n, ages.levels
    if name == 'eigen':
        if spectral is None:
            raise ConfigError("The eigen initial density needs the spectral "
                              "solution")
        return spectral.f_full * spectral_module.survival_table(model, grid,
                                                                ages)
    if name == 'newborn':
        u0 = np.zeros((n, levels))
        profile = (spectral.f_tilde if spectral is not None
                   else np.ones(n))
        u0[:, 0] = profile / (grid.integrate(profile) * ages.da)
        return u0
    if name in ('young', 'skewed'):
        a_lo = np.asarray(model.support(grid.nodes)[0])
        u0 = (ages.ages[None, :] < a_lo[:, None]).astype(float)
        if name == 'skewed':
            u0 *= ((grid.nodes - grid.lo) ** 2)[:, None]
        return u0 / quadrature.integrate_table(grid, ages, u0)
    raise ConfigError("Unknown initial density '{}' (known: {})"
                      .format(name, ", ".join(INITIAL_PRESETS)))


def init_state(u0, law, model, grid, ages, spectral=None):
    """The state at t = 0 with z0 = u0 Psi.

    :param u0: (nodes x levels) array, or the name of an initial density
    :raises NegativeInput: if u0 has negative values
    :raises WeightDivergence: if u0 has mass on the last age cell before
        a_hi(x_b)
    """
    if isinstance(u0, str):
        name = u0
        if name == 'eigen' and spectral is not None:
            # z0 = f_i directly, its last cell is finite
            return TransportState(law, model, grid, ages, spectral.f_full)
        u0 = initial_density(name, law, model, grid, ages, spectral)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (grid.n, ages.levels):
        raise ConfigError("Initial density must be a {}x{} table"
                          .format(grid.n, ages.levels))
    phi = spectral_module.check_initial_density(u0, model, grid, ages)
    mass = u0 > 0
    z0 = np.where(mass, u0 / np.where(mass, phi, 1.0), 0.0)
    return TransportState(law, model, grid, ages, z0)


def step(state):
    """Advance state by one age step (in place) and return it."""
    levels = state.ages.levels
    old_rows = state._rows()
    nodes = np.arange(state.grid.n)
    leaving = state._values[old_rows[state._last], nodes]
    state.outflow = state.dz * float(np.dot(state.grid.weights, leaving))
    head = (state._head + 1) % levels
    rows = (head - np.arange(levels)) % levels
    births = state.boundary.births(state._values, rows)
    state._values[head] = births
    state._head = head
    state.births = births
    state.steps += 1
    state.t = state.steps * state.dz
    return state


def _frozen(values):
    values = np.array(values, dtype=float)
    values.flags.writeable = False
    return values


class EvolveReport(object):
    """Time series of the run diagnostics (read-only arrays)."""

    def __init__(self, t, births, population, conserved, aeg_l1, lam,
                 mean_cycle, status=None, dilution=0.0):
        self.t = _frozen(t)
        self.births = _frozen(births)
        self.population = _frozen(population)
        self.conserved = _frozen(conserved)
        self.aeg_l1 = _frozen(aeg_l1)
        self.lam = lam
        self.mean_cycle = mean_cycle
        self.status = status
        self.dilution = dilution

    def _tail(self, fraction):
        start = self.t[0] + (1.0 - fraction) * (self.t[-1] - self.t[0])
        return (self.t >= start) & (self.population > 0)

    def growth_rate(self, fraction=1.0 / 3.0):
        """Slope of log(population) over the last fraction of the run."""
        keep = self._tail(fraction)
        return float(linregress(self.t[keep],
                                np.log(self.population[keep])).slope)

    def rows(self):
        return zip(self.t, self.births, self.population, self.conserved,
                   self.aeg_l1)

    def __repr__(self):
        return ("EvolveReport({} records, t_end={:.6g}, status={})"
                .format(self.t.size, self.t[-1], self.status))


def _check_compatible(state, spectral):
    if (spectral.ages is None or spectral.v_full is None or
            spectral.v_full.shape != state.mask.shape or
            spectral.ages.da != state.ages.da):
        raise ConfigError("Spectral solution was computed on a different "
                          "grid than the transport state")
    if getattr(spectral, 'age_rule', None) != 'levels':
        logger.warning("Spectral solution does not use the age levels; the "
                       "conserved functional is only approximate")


def evolve(state, t_end, spectral, record_every=1, snapshot_times=(),
           on_snapshot=None):
    """Step to t_end, recording births, population (integral of z Phi), the
    conserved functional C(t) = e^(-lam t) integral of z v and the L1
    distance d(t) of e^(-lam t) u / C(0) to Phi f_i.

    :param snapshot_times: times at which on_snapshot(index, state) is
        called (the nearest step is used)
    :returns: EvolveReport
    """
    _check_compatible(state, spectral)
    grid, ages = state.grid, state.ages
    lam = spectral.lam
    limit = state.phi * spectral.f_full
    steps = int(round((t_end - state.t) / state.dz))
    snapshots = {}
    for index, time in enumerate(snapshot_times):
        snapshots.setdefault(
            max(0, min(steps, int(round((time - state.t) / state.dz)))),
            []).append(index)
    series = {k: [] for k in ('t', 'births', 'population', 'conserved',
                              'aeg_l1')}
    c0 = None

    def record():
        nonlocal c0
        z = state.z
        decay = math.exp(-lam * state.t)
        conserved = decay * quadrature.integrate_table(grid, ages,
                                                       z * spectral.v_full)
        if c0 is None:
            c0 = conserved
        scale = decay / c0 if c0 > 0 else 0.0
        series['t'].append(state.t)
        series['births'].append(grid.inner(np.ones(grid.n), state.births))
        series['population'].append(
            quadrature.integrate_table(grid, ages, z * state.phi))
        series['conserved'].append(conserved)
        series['aeg_l1'].append(quadrature.integrate_table(
            grid, ages, np.abs(scale * z * state.phi - limit)))

    record()
    for index in snapshots.get(0, ()):
        on_snapshot(index, state)
    for count in range(1, steps + 1):
        step(state)
        if count % record_every == 0 or count == steps:
            record()
        for index in snapshots.get(count, ()):
            on_snapshot(index, state)
    report = EvolveReport(lam=lam, mean_cycle=spectral.mean_cycle, **series)
    logger.info("Evolved to t=%.6g in %d steps: C(t)/C(0) in [%.9g, %.9g]",
                state.t, steps, min(report.conserved) / report.conserved[0]
                if report.conserved[0] else np.nan,
                max(report.conserved) / report.conserved[0]
                if report.conserved[0] else np.nan)
    return report


def chemostat_rescale(report, D, tolerance=STEADY_TOLERANCE):
    """The report for removal at rate D: population times e^(-D t), with a
    status of 'steady', 'growing' or 'decaying' from the last third."""
    population = report.population * np.exp(-D * report.t)
    rescaled = EvolveReport(report.t, report.births, population,
                            report.conserved, report.aeg_l1, report.lam,
                            report.mean_cycle, dilution=D)
    keep = rescaled._tail(1.0 / 3.0)
    tail = population[keep]
    if tail.size and tail.max() / tail.min() - 1.0 < tolerance:
        status = 'steady'
    elif rescaled.growth_rate() > 0:
        status = 'growing'
    else:
        status = 'decaying'
    rescaled.status = status
    return rescaled


class SizeTable(object):
    """w(x, a) on a uniform size grid x ages, with its total mass."""

    def __init__(self, x, ages, w, total):
        self.x = _frozen(x)
        self.ages = ages
        self.w = _frozen(w)
        self.total = total

    def __repr__(self):
        return "SizeTable({} sizes x {} levels)".format(self.x.size,
                                                        self.ages.levels)


def _level_interpolant(grid, column):
    return PchipInterpolator(grid.nodes, column, extrapolate=True)


def size_density(state, x, k, u=None):
    """w(t, x, a_k) = u(t, pi_-a x, a_k) g(pi_-a x) / g(x); zero where the
    initial size pi_-a x falls outside the window."""
    law, model = state.law, state.model
    u = state.u if u is None else u
    x = np.asarray(x, dtype=float)
    born = law._flow(x, -state.ages.ages[k])
    tol = CLAMP_TOLERANCE * model.x_hi
    ok = np.isfinite(born) & (born >= model.x_lo - tol) & (
        born <= model.x_hi + tol)
    w = np.zeros_like(x)
    if np.any(ok):
        b = np.clip(born[ok], model.x_lo, model.x_hi)
        values = np.maximum(_level_interpolant(state.grid, u[:, k])(b), 0.0)
        w[ok] = values * np.asarray(law.g(b)) / np.asarray(law.g(x[ok]))
    return w


def age_size_transform(state, nx=256, order=64):
    """Tabulate w on nx uniform sizes from x_lo to the largest size reached.

    The total mass integrates every level over the image of the window with
    Gauss-Legendre.
    """
    law, model = state.law, state.model
    u = state.u
    a_hi = np.asarray(model.support(state.grid.nodes)[1])
    top = float(np.nanmax(law._flow(state.grid.nodes, a_hi)))
    x = np.linspace(model.x_lo, top, nx)
    w = np.empty((nx, state.ages.levels))
    total = 0.0
    for k, a in enumerate(state.ages.ages):
        w[:, k] = size_density(state, x, k, u)
        lo = float(law._flow(model.x_lo, a))
        hi = law._flow(model.x_hi, a)
        hi = law.x_max if np.isnan(hi) else float(hi)
        if np.isnan(lo) or not lo < hi:
            continue
        nodes, weights = quadrature.composite_gauss_legendre(lo, hi, 4,
                                                             order // 4)
        total += state.ages.da * float(np.dot(
            weights, size_density(state, nodes, k, u)))
    return SizeTable(x, state.ages, w, total)


class ParadoxReport(object):

    def __init__(self, law, generation_bound):
        self.law = law
        self.generation_bound = generation_bound

    def __repr__(self):
        return "ParadoxReport({!r}, generation_bound={})".format(
            self.law, self.generation_bound)


def _one_sided_slope(fn, x, h, sign):
    # fourth order one-sided difference
    f = [float(fn(x + sign * k * h)) for k in range(5)]
    return sign * (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] -
                   3 * f[4]) / (12 * h)


def paradox_probe(seed, x_lo, x_hi, derivative=None, x_max=None):
    """The dyadic law g(x) = 2^n seed(2^-n x) built from a seed on
    [x_lo, 2 x_lo], with the bound on the number of living generations.

    The bound is floor(2 + log2(x_hi / x_lo)), so a window narrower than
    one doubling (x_hi < 2 x_lo) gives 2, not 3.

    :raises SeedMismatch: if seed(2 x_lo) != 2 seed(x_lo) (1e-10 relative)
        or the slopes at the two ends differ
    """
    left = float(seed(x_lo))
    right = float(seed(2.0 * x_lo))
    if abs(right - 2.0 * left) > 1e-10 * abs(2.0 * left):
        raise SeedMismatch("seed(2 x_lo) = {} but 2 seed(x_lo) = {}"
                           .format(right, 2.0 * left))
    if derivative is not None:
        d_left = float(derivative(x_lo))
        d_right = float(derivative(2.0 * x_lo))
        tolerance = 1e-10
    else:
        h = 1e-3 * x_lo
        d_left = _one_sided_slope(seed, x_lo, h, 1)
        d_right = _one_sided_slope(seed, 2.0 * x_lo, h, -1)
        tolerance = 1e-6
    if abs(d_right - d_left) > tolerance * max(1.0, abs(d_left)):
        raise SeedMismatch("seed' differs at the ends: {} and {}"
                           .format(d_left, d_right))
    law = GrowthLaw.dyadic(seed, x_lo, x_hi, x_max)
    bound = int(math.floor(2.0 + math.log2(x_hi / x_lo)))
    return ParadoxReport(law, bound)

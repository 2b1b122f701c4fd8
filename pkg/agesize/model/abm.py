"""Weighted agent based simulation of the cell population.

Cells are processed in order of division time from a heap keyed by
(division time, cell id).  Every cell draws its randomness from its own
counter based stream, Philox keyed by (seed, domain, counter), so a run is
fully determined by its seed whatever the order of processing.  Sizes are
evaluated lazily: only at division and at census times (SDE cells carry their
Euler-Maruyama path).

When the population exceeds n_max it is thinned to half and the weight of
every remaining cell doubles, so weight * count estimates the true population.
"""

import copy
import enum
import heapq
import logging
import math

import numpy as np
from scipy.stats import linregress

from agesize.core.exceptions import (
    ConfigError,
    NotHomogeneous,
    OutOfWindow,
    ShortTrajectory,
    StepUnderflow,
)

logger = logging.getLogger(__name__)

Mode = enum.Enum('Mode', 'DETERMINISTIC INHERITED_RATE SDE')
Noise = enum.Enum('Noise', 'LINEAR POWER')

CELL_STREAM = 0
THINNING_STREAM = 1
INITIAL_STREAM = 2
SDE_STEP_FRACTION = 1e-3
SIZE_TOLERANCE = 1e-9
MIN_CYCLES = 10


def stream(seed, domain, counter):
    """Counter based generator for (seed, domain, counter)."""
    key = (int(seed) << 64) | (int(domain) << 56) | int(counter)
    return np.random.Generator(np.random.Philox(key=key))


class ModeSpec(object):
    """How cells grow between birth and division.

    DETERMINISTIC follows the growth law; INHERITED_RATE grows x_b e^(k a)
    with k drawn at birth from `rates`; SDE integrates
    dx = g(x) dt + sigma(x) dB with sigma = s0 (x - x_lo) (LINEAR) or
    s0 x^gamma (POWER, can reach zero).
    """

    def __init__(self, mode=Mode.DETERMINISTIC, rates=None, s0=0.0,
                 gamma=1.0, noise=Noise.LINEAR, dt=None):
        if mode == Mode.INHERITED_RATE and rates is None:
            raise ConfigError("Inherited rate mode needs a growth rate "
                              "distribution")
        if s0 < 0:
            raise ConfigError("Noise scale s0 must be >= 0")
        self.mode = mode
        self.rates = rates
        self.s0 = float(s0)
        self.gamma = float(gamma)
        self.noise = noise
        self.dt = dt

    def __repr__(self):
        return "ModeSpec({})".format(self.mode.name.lower())


class Cell(object):
    __slots__ = ('cell_id', 'type_id', 'x_b', 'birth_time', 'tau',
                 'kappa_draw', 'generation', 'daughter_u', 'path')

    def __init__(self, cell_id, type_id, x_b, birth_time, tau, generation,
                 kappa_draw=None, daughter_u=(0.0, 0.0), path=None):
        self.cell_id = cell_id
        self.type_id = type_id
        self.x_b = x_b
        self.birth_time = birth_time
        self.tau = tau
        self.kappa_draw = kappa_draw
        self.generation = generation
        self.daughter_u = daughter_u
        self.path = path

    @property
    def division_time(self):
        return self.birth_time + self.tau

    def __repr__(self):
        return ("Cell(id={}, type={}, x_b={:.6g}, born={:.6g}, tau={:.6g}, "
                "gen={})".format(self.cell_id, self.type_id, self.x_b,
                                 self.birth_time, self.tau, self.generation))


class Population(object):
    """Living cells, the global weight and the event heap."""

    def __init__(self, laws, models, seed, mode, rule=None):
        self.laws = tuple(laws)
        self.models = tuple(models)
        self.seed = int(seed)
        self.mode = copy.copy(mode)
        self.rule = rule
        self.cells = {}
        self.heap = []
        self.weight = 1.0
        self.t = 0.0
        self.next_id = 0
        self.thinning_rounds = 0
        if mode.mode == Mode.SDE and mode.dt is None:
            self.mode.dt = (SDE_STEP_FRACTION *
                            self.models[0].mean_cycle_length())

    @property
    def n_types(self):
        return len(self.models)

    def __len__(self):
        return len(self.cells)

    def __repr__(self):
        return "Population({} cells, weight={}, t={:.6g})".format(
            len(self.cells), self.weight, self.t)


def sde_path(law, x_b, duration, mode, rng):
    """Euler-Maruyama sizes at ages 0, dt, 2dt, ..., duration.

    :raises StepUnderflow: if a step would give a non-positive size
    """
    steps = max(1, int(math.ceil(duration / mode.dt - 1e-12)))
    ages = np.minimum(np.arange(steps + 1) * mode.dt, duration)
    if mode.s0 == 0.0:
        return np.asarray(law.flow(x_b, ages))
    increments = np.diff(ages)
    noise = rng.standard_normal(steps) * np.sqrt(increments)
    sizes = np.empty(steps + 1)
    sizes[0] = x = x_b
    for k in range(steps):
        if mode.noise == Noise.LINEAR:
            sigma = mode.s0 * (x - law.x_lo)
        else:
            sigma = mode.s0 * x ** mode.gamma
        x = x + float(law.g(x)) * increments[k] + sigma * noise[k]
        if x <= 0:
            raise StepUnderflow("Euler-Maruyama step gave size {} at age {}"
                                .format(x, ages[k + 1]))
        sizes[k + 1] = x
    return sizes


def grow_size(cell, age, mode, law):
    """Size of cell at the given age (within its cycle)."""
    if mode.mode == Mode.DETERMINISTIC:
        return law.flow(cell.x_b, age)
    if mode.mode == Mode.INHERITED_RATE:
        return cell.x_b * np.exp(cell.kappa_draw * np.asarray(age))
    ages = np.minimum(np.arange(cell.path.size) * mode.dt, cell.tau)
    return np.interp(age, ages, cell.path)


def _new_cell(pop, type_id, x_b, birth_time, generation):
    model = pop.models[type_id]
    try:
        x_b = float(model.window_check(x_b))
    except OutOfWindow as e:
        raise OutOfWindow("Type {} daughter out of its window: {}"
                          .format(type_id + 1, e))
    cell_id = pop.next_id
    pop.next_id += 1
    rng = stream(pop.seed, CELL_STREAM, cell_id)
    tau = float(model.sample(x_b, rng.random()))
    cell = Cell(cell_id, type_id, x_b, birth_time, tau, generation,
                daughter_u=tuple(rng.random(2)))
    mode = pop.mode
    if mode.mode == Mode.INHERITED_RATE:
        cell.kappa_draw = float(mode.rates.sample(x_b, rng.random()))
    elif mode.mode == Mode.SDE:
        cell.path = sde_path(pop.laws[type_id], x_b, tau, mode, rng)
    pop.cells[cell_id] = cell
    heapq.heappush(pop.heap, (cell.division_time, cell_id))
    return cell


def seed_population(initial, law, model, seed, mode=None, rule=None):
    """Initial population at t = 0, all cells at age 0.

    initial keys: 'dirac' (a single initial size, with optional 'n' copies) or
    'n' with 'density': 'uniform' (default), 'profile' (with 'grid' and
    'profile', a density tabulated on the grid nodes) or a quantile function
    u -> x_b;
    'type' selects the initial type for multi-type rules.

    :raises OutOfWindow: if an initial size is outside the window
    """
    mode = mode or ModeSpec()
    if rule is not None:
        laws, models = rule.laws, rule.models
    else:
        laws, models = (law, ), (model, )
    pop = Population(laws, models, seed, mode, rule)
    type_id = int(initial.get('type', 0))
    window = models[type_id]
    if initial.get('dirac') is not None:
        sizes = [float(initial['dirac'])] * int(initial.get('n', 1))
    else:
        n = int(initial.get('n', 0))
        if n < 1:
            raise ConfigError("Initial population needs n >= 1")
        density = initial.get('density', 'uniform')
        if density == 'profile':
            density = _profile_quantile(initial['grid'], initial['profile'])
        sizes = []
        for index in range(n):
            u = stream(seed, INITIAL_STREAM, index).random()
            if density == 'uniform':
                sizes.append(window.x_lo + u * (window.x_hi - window.x_lo))
            else:
                sizes.append(float(density(u)))
    for x_b in sizes:
        _new_cell(pop, type_id, x_b, 0.0, 0)
    logger.info("Seeded %r", pop)
    return pop


def _profile_quantile(grid, profile):
    points = np.concatenate(([grid.lo], grid.nodes, [grid.hi]))
    cdf = np.concatenate(([0.0], grid.cdf(np.asarray(profile)), [1.0]))
    return lambda u: float(np.interp(u, cdf, points))


def _division_size(pop, cell):
    mode = pop.mode
    if mode.mode == Mode.SDE:
        return float(cell.path[-1])
    return float(grow_size(cell, cell.tau, mode, pop.laws[cell.type_id]))


def _divide(pop, cell):
    t = cell.division_time
    size = _division_size(pop, cell)
    rule = pop.rule
    for d in range(2):
        if rule is None:
            type_id, x_b = 0, 0.5 * size
        else:
            i = cell.type_id
            if rule.pairing:
                type_id = d
            else:
                cumulative = np.cumsum(rule.r[i])
                type_id = min(int(np.searchsorted(
                    cumulative, cell.daughter_u[d], side='right')),
                    rule.n_types - 1)
            x_b = rule.beta[i, type_id] * size
        _new_cell(pop, type_id, x_b, t, cell.generation + 1)


def control_population(pop, n_max):
    """Thin to half when there are more than n_max cells.

    floor(N / 2) cells are kept, plus one with probability 1/2 when N is
    odd; the weight doubles.
    """
    if n_max < 2:
        raise ConfigError("n_max must be >= 2")
    count = len(pop.cells)
    if count <= n_max:
        return pop
    rng = stream(pop.seed, THINNING_STREAM, pop.thinning_rounds)
    keep = count // 2 + (1 if count % 2 and rng.random() < 0.5 else 0)
    ids = np.array(sorted(pop.cells))
    kept = set(rng.choice(ids, size=keep, replace=False).tolist())
    pop.cells = {i: pop.cells[i] for i in sorted(kept)}
    pop.heap = [(c.division_time, i) for i, c in pop.cells.items()]
    heapq.heapify(pop.heap)
    pop.weight *= 2.0
    pop.thinning_rounds += 1
    logger.debug("Thinned %d cells to %d at t=%.6g (weight %g)", count, keep,
                 pop.t, pop.weight)
    return pop


class Census(object):
    """Snapshot of the living cells (arrays ordered by cell id)."""

    def __init__(self, t, weight, type_id, x_b, age, generation, size):
        self.t = t
        self.weight = weight
        self.type_id = type_id
        self.x_b = x_b
        self.age = age
        self.generation = generation
        self.size = size

    def __len__(self):
        return self.x_b.size

    def distinct_sizes(self, rtol=SIZE_TOLERANCE):
        sizes = np.sort(self.size)
        if sizes.size == 0:
            return 0
        gaps = np.diff(sizes) > rtol * sizes[1:]
        return int(np.count_nonzero(gaps)) + 1

    def generations_alive(self):
        return int(np.unique(self.generation).size)


def take_census(pop, t):
    cells = [pop.cells[i] for i in sorted(pop.cells)]
    type_id = np.array([c.type_id for c in cells], dtype=int)
    x_b = np.array([c.x_b for c in cells], dtype=float)
    age = t - np.array([c.birth_time for c in cells], dtype=float)
    generation = np.array([c.generation for c in cells], dtype=int)
    size = np.empty(len(cells))
    for k in range(pop.n_types):
        mine = type_id == k
        if not np.any(mine):
            continue
        if pop.mode.mode == Mode.DETERMINISTIC:
            size[mine] = pop.laws[k].flow(x_b[mine], age[mine])
        else:
            for index in np.flatnonzero(mine):
                size[index] = grow_size(cells[index], age[index], pop.mode,
                                        pop.laws[k])
    return Census(t, pop.weight, type_id, x_b, age, generation, size)


class Trajectory(object):
    """Census records of a run."""

    def __init__(self, n_types, mean_cycle):
        self.n_types = n_types
        self.mean_cycle = mean_cycle
        self.censuses = []
        self.birth_sizes = []
        self.birth_weights = []
        self.birth_types = []

    def add(self, census):
        self.censuses.append(census)

    @property
    def times(self):
        return np.array([c.t for c in self.censuses])

    @property
    def counts(self):
        return np.array([len(c) for c in self.censuses])

    @property
    def weights(self):
        return np.array([c.weight for c in self.censuses])

    @property
    def estimated(self):
        return self.counts * self.weights

    def type_counts(self, type_id):
        return np.array([np.count_nonzero(c.type_id == type_id)
                         for c in self.censuses])

    def rows(self, distinct=False):
        """(t, count, weight, est_population, per type counts...,
        [distinct sizes])"""
        for c in self.censuses:
            row = [c.t, len(c), c.weight, len(c) * c.weight]
            row += [int(np.count_nonzero(c.type_id == k))
                    for k in range(self.n_types)]
            if distinct:
                row.append(c.distinct_sizes())
            yield tuple(row)


def run(pop, t_end, census_times=(), observers=(), n_max=None,
        record_births_after=None):
    """Process divisions up to t_end.

    :param census_times: times at which the living cells are recorded
    :param observers: callables observer(pop, census) run at each census
    :param n_max: OPTIONAL population cap (thinning)
    :param record_births_after: OPTIONAL time after which the initial sizes
        of newborns are recorded
    :returns: Trajectory
    :raises OutOfWindow: if a daughter leaves its type's window
    """
    if not t_end > pop.t:
        raise ConfigError("t_end must be after the population time {}"
                          .format(pop.t))
    trajectory = Trajectory(pop.n_types, pop.models[0].mean_cycle_length())
    pending = sorted(t for t in census_times if pop.t <= t <= t_end)
    index = 0

    def census(t):
        snapshot = take_census(pop, t)
        trajectory.add(snapshot)
        for observer in observers:
            observer(pop, snapshot)

    while pop.heap and pop.heap[0][0] <= t_end:
        t_next, cell_id = pop.heap[0]
        while index < len(pending) and pending[index] < t_next:
            census(pending[index])
            index += 1
        heapq.heappop(pop.heap)
        cell = pop.cells.pop(cell_id)
        pop.t = t_next
        first_child = pop.next_id
        _divide(pop, cell)
        if record_births_after is not None and t_next >= record_births_after:
            for child in range(first_child, pop.next_id):
                born = pop.cells[child]
                trajectory.birth_sizes.append(born.x_b)
                trajectory.birth_weights.append(pop.weight)
                trajectory.birth_types.append(born.type_id)
        if n_max is not None:
            control_population(pop, n_max)
    while index < len(pending):
        census(pending[index])
        index += 1
    pop.t = t_end
    logger.info("Ran to t=%.6g: %r", t_end, pop)
    return trajectory


def estimate_malthus(trajectory, fraction=0.5, type_id=None,
                     min_cycles=MIN_CYCLES):
    """Least squares slope of log(weight * count) over the last fraction of
    the trajectory.

    :returns: (lambda_hat, stderr)
    :raises ShortTrajectory: if the trajectory spans less than min_cycles
        mean cycle lengths or has too few usable points
    """
    t = trajectory.times
    if t.size < 3 or (t[-1] - t[0]) < min_cycles * trajectory.mean_cycle:
        raise ShortTrajectory(
            "Trajectory spans {:.3g} time units, needs {} mean cycles ({:.3g})"
            .format(t[-1] - t[0] if t.size else 0.0, min_cycles,
                    min_cycles * trajectory.mean_cycle))
    counts = (trajectory.counts if type_id is None
              else trajectory.type_counts(type_id))
    estimated = counts * trajectory.weights
    keep = (t >= t[0] + (1.0 - fraction) * (t[-1] - t[0])) & (estimated > 0)
    if np.count_nonzero(keep) < 3:
        raise ShortTrajectory("Too few census points to fit a growth rate")
    fit = linregress(t[keep], np.log(estimated[keep]))
    return float(fit.slope), float(fit.stderr)


def paradox_census(trajectory, law, t=None):
    """Distinct sizes and living generations at census time t (the last
    census by default).

    :returns: dict with distinct_sizes, generations_alive, generation_bound
        and within_bound
    :raises NotHomogeneous: if g(2x) != 2g(x) on the window
    """
    if not law.is_homogeneous():
        raise NotHomogeneous("The generation census needs g(2x) = 2g(x)")
    if t is None:
        census = trajectory.censuses[-1]
    else:
        census = min(trajectory.censuses, key=lambda c: abs(c.t - t))
    bound = int(math.floor(2.0 + math.log2(law.x_hi / law.x_lo)))
    generations = census.generations_alive()
    return {
        't': census.t,
        'distinct_sizes': census.distinct_sizes(),
        'generations_alive': generations,
        'generation_bound': bound,
        'within_bound': generations <= bound,
    }


def birth_size_ks(trajectory, grid, profile):
    """Weighted Kolmogorov-Smirnov distance between the recorded birth sizes
    and a density profile on the grid."""
    sizes = np.asarray(trajectory.birth_sizes, dtype=float)
    if sizes.size == 0:
        raise ShortTrajectory("No births were recorded")
    weights = np.asarray(trajectory.birth_weights, dtype=float)
    order = np.argsort(sizes)
    sizes = sizes[order]
    empirical = np.cumsum(weights[order]) / weights.sum()
    before = np.concatenate(([0.0], empirical[:-1]))
    points = np.concatenate(([grid.lo], grid.nodes, [grid.hi]))
    cdf = np.concatenate(([0.0], grid.cdf(profile), [1.0]))
    model = np.interp(sizes, points, cdf)
    return float(max(np.max(np.abs(empirical - model)),
                     np.max(np.abs(before - model))))

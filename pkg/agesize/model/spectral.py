"""The renewal eigenproblem.

K_lam acts on functions of the initial size,

    K_lam v(x) = integral of 2 e^(-lam a) q(x, a) v(S_a x) da,

and J = W^-1 K_lam^T W is its adjoint under the grid inner product.  The
Malthusian parameter lam is the root of r(K_lam) = 1, found by bisection with
power iteration for the spectral radius.  The Perron vector of K_lam is the
dual profile v_tilde, that of J the stationary birth profile f_tilde.  From
these come the two dimensional eigenfunctions

    v(x_b, a) = integral over s > a of 2 q(x_b, s) v_tilde(S_s x_b)
                e^(-lam (s - a)) ds
    f_i(x_b, a) = e^(-lam a) f_tilde(x_b)

tabulated on grid nodes x uniform age levels.

With age_rule='levels' the a integral of K_lam is the sum over those same
levels and v comes from the backward recursion of one transport step, which
makes the pair exactly dual to agesize.model.transport.
"""

import concurrent.futures
import logging
import math

import numpy as np

from agesize.core.exceptions import (
    AssumptionViolation,
    BracketFailure,
    ConfigError,
    NegativeInput,
    NoConvergence,
    WeightDivergence,
)
from agesize.model import cycle as cycle_models
from agesize.model import quadrature

logger = logging.getLogger(__name__)

POWER_TOLERANCE = 1e-12
POWER_MAX_ITERATIONS = 100000
RADIUS_TOLERANCE = 1e-10
BRACKET_TOLERANCE = 1e-12
DUAL_ORDER = 8
ROWS_PER_CHUNK = 32
AGE_RULES = ('gauss', 'levels')


class PowerResult(object):

    def __init__(self, radius, vector, iterations, converged):
        self.radius = radius
        self.vector = vector
        self.iterations = iterations
        self.converged = converged

    def __repr__(self):
        return ("PowerResult(radius={!r}, iterations={}, converged={})"
                .format(self.radius, self.iterations, self.converged))


def spectral_radius(matrix, tol=POWER_TOLERANCE,
                    max_iter=POWER_MAX_ITERATIONS, start=None):
    """Dominant eigenvalue and sup-normalised eigenvector of a nonnegative
    matrix by power iteration.

    Stops when successive radius estimates differ by less than tol.  A
    result that didn't converge within max_iter is returned with
    converged=False; callers that need the vector raise NoConvergence.
    """
    matrix = np.asarray(matrix, dtype=float)
    v = (np.ones(matrix.shape[0]) if start is None
         else np.array(start, dtype=float))
    v /= np.max(np.abs(v))
    previous = np.nan
    radius = 0.0
    for iteration in range(1, max_iter + 1):
        w = matrix @ v
        radius = float(np.max(np.abs(w)))
        if radius == 0.0:
            return PowerResult(0.0, v, iteration, True)
        v = w / radius
        if abs(radius - previous) < tol:
            return PowerResult(radius, v, iteration, True)
        previous = radius
    logger.warning("Power iteration did not converge in %d iterations "
                   "(radius %.12g)", max_iter, radius)
    return PowerResult(radius, v, max_iter, False)


class RenewalOperator(object):
    """Discretised K_lam and J on a QuadratureGrid.

    Row i integrates over the support [a_lo(x_i), a_hi(x_i)] with composite
    Gauss-Legendre in a; the daughter sizes S_a x_i are read off by
    piecewise-linear interpolation between the grid nodes.  Everything
    except the factor e^(-lam a) is computed once here, in row chunks spread
    over `threads` workers.  Rows are independent so the result does not
    depend on the number of workers.

    Given an AgeGrid, the a integral is instead the sum over the levels
    a_1, ..., a_(L-1) with weight da.  That is the rule the transport step
    divides cells with, so its lam and profiles are exact for the stepping.

    :raises AssumptionViolation: if (A1)-(A6) fail and check is True
    """

    def __init__(self, law, model, grid, a_panels=quadrature.DEFAULT_PANELS,
                 a_order=quadrature.DEFAULT_ORDER, threads=1, check=True,
                 ages=None):
        if check:
            report = cycle_models.validate_assumptions(law, model)
            if not report.ok:
                raise AssumptionViolation(
                    "Assumptions violated: {}".format(
                        ", ".join(c.name for c in report.failures)), report)
        self.law = law
        self.model = model
        self.grid = grid
        self.a_panels = a_panels
        self.a_order = a_order
        self.age_grid = ages
        lo, hi = model.support(grid.nodes)
        self.a_lo = np.asarray(lo)
        self.a_hi = np.asarray(hi)
        n = grid.n
        chunks = [np.arange(start, min(start + ROWS_PER_CHUNK, n))
                  for start in range(0, n, ROWS_PER_CHUNK)]
        with concurrent.futures.ThreadPoolExecutor(
                max_workers=max(1, int(threads))) as pool:
            parts = list(pool.map(self._prepare_rows, chunks))
        rows, ages, base, left, right, wl, wr = (
            np.concatenate([p[k] for p in parts]) for k in range(7))
        self.mothers = np.concatenate((rows, rows))
        self.daughters = np.concatenate((left, right))
        self._index = self.mothers * n + self.daughters
        self._ages = np.concatenate((ages, ages))
        self._base = np.concatenate((base * wl, base * wr))
        logger.debug("Renewal operator on %d nodes: %d quadrature entries",
                     n, ages.size)

    def _age_rule(self, rows):
        if self.age_grid is None:
            return quadrature.composite_gauss_legendre(
                self.a_lo[rows], self.a_hi[rows], self.a_panels,
                self.a_order)
        levels = self.age_grid.ages[1:]
        shape = (rows.size, levels.size)
        return (np.broadcast_to(levels, shape),
                np.full(shape, self.age_grid.da))

    def _prepare_rows(self, rows):
        x = self.grid.nodes[rows]
        ages, weights = self._age_rule(rows)
        q = np.asarray(self.model.density(x[:, None], ages))
        with np.errstate(invalid='ignore', over='ignore'):
            daughters = 0.5 * self.law._flow(x[:, None], ages)
        base = 2.0 * q * weights
        keep = (base > 0) & np.isfinite(daughters)
        left, right, wl, wr = self.grid.hat(daughters[keep])
        row_index = np.broadcast_to(rows[:, None], ages.shape)[keep]
        return row_index, ages[keep], base[keep], left, right, wl, wr

    @property
    def base(self):
        """Weight of each entry at lam = 0."""
        return self._base

    @property
    def levels(self):
        """Age level of each entry (level rule only)."""
        return np.rint(self._ages / self.age_grid.da).astype(int)

    def level_sums(self, v):
        """The level k part of K_0 v for every mother node, as a
        (nodes x levels) table (level rule only)."""
        n, count = self.grid.n, self.age_grid.levels
        weights = self._base * np.asarray(v)[self.daughters]
        return np.bincount(self.mothers * count + self.levels,
                           weights=weights,
                           minlength=n * count).reshape(n, count)

    def K(self, lam):
        """Matrix of K_lam on node values."""
        n = self.grid.n
        weights = self._base * np.exp(-lam * self._ages)
        return np.bincount(self._index, weights=weights,
                           minlength=n * n).reshape(n, n)

    def J(self, lam):
        """Matrix of J = W^-1 K_lam^T W, the adjoint of K_lam."""
        w = self.grid.weights
        return (self.K(lam).T * w[None, :]) / w[:, None]

    def kernel(self, x_b, y, lam):
        """k_lam(x_b, y) = 4 e^(-lam a) q(x_b, a) / g(2y), a = a(y; x_b)."""
        x_b, y = np.broadcast_arrays(np.asarray(x_b, dtype=float),
                                     np.asarray(y, dtype=float))
        a = np.asarray(self.law.cycle_age(y, x_b))
        q = np.asarray(self.model.density(x_b, np.maximum(a, 0.0)))
        return (4.0 * np.exp(-lam * a) * q /
                np.asarray(self.law.g(2.0 * y)))

    def adjoint_gap(self, lam, pairs=10, seed=0):
        """max |<g, J f> - <K g, f>| / (|f| |g|) over random f, g >= 0."""
        rng = np.random.default_rng(seed)
        K = self.K(lam)
        J = self.J(lam)
        grid = self.grid
        gap = 0.0
        for _ in range(pairs):
            f = rng.random(grid.n)
            g = rng.random(grid.n)
            diff = abs(grid.inner(g, J @ f) - grid.inner(K @ g, f))
            gap = max(gap, diff / (grid.norm(f) * grid.norm(g)))
        return gap


def build_K(law, model, grid, lam, threads=1):
    return RenewalOperator(law, model, grid, threads=threads).K(lam)


def build_J(law, model, grid, lam, threads=1):
    return RenewalOperator(law, model, grid, threads=threads).J(lam)


class SpectralSolution(object):
    """lam with its eigenfunctions and diagnostics.

    residuals holds r_K = |r(K_lam) - 1|, r_J = |r(J) - 1| and the adjoint
    gap; history is the bisection record of (lam, r(K_lam)).
    """

    def __init__(self, lam, v_tilde, grid, history=(), r_K=np.nan):
        self.lam = lam
        self.v_tilde = v_tilde
        self.grid = grid
        self.history = tuple(history)
        self.residuals = {'r_K': r_K, 'r_J': np.nan, 'adjoint_gap': np.nan}
        self.f_tilde = None
        self.ages = None
        self.v_full = None
        self.f_full = None
        self.phi_table = None
        self.phi_sandwich = None
        self.mean_cycle = None
        self.age_rule = None

    def __repr__(self):
        return "SpectralSolution(lam={!r}, residuals={})".format(
            self.lam, self.residuals)


def solve_malthus(law, model, grid, operator=None, threads=1):
    """Bisection for r(K_lam) = 1 on [0, ln 4 / a_lo].

    :returns: SpectralSolution with lam, v_tilde and the history
    :raises BracketFailure: if r(K_0) <= 1 or r(K_hi) >= 1 on the grid
    :raises NoConvergence: if a power iteration fails
    """
    op = operator or RenewalOperator(law, model, grid, threads=threads)
    a_lo = float(np.min(op.a_lo))
    lam_lo, lam_hi = 0.0, math.log(4.0) / a_lo
    low = spectral_radius(op.K(lam_lo))
    high = spectral_radius(op.K(lam_hi))
    history = [(lam_lo, low.radius), (lam_hi, high.radius)]
    if not low.converged or not high.converged:
        raise NoConvergence("Power iteration failed at the bracket ends")
    if low.radius <= 1.0:
        raise BracketFailure("r(K_0) = {} <= 1 on the grid"
                             .format(low.radius))
    if high.radius >= 1.0:
        raise BracketFailure("r(K_{}) = {} >= 1 on the grid"
                             .format(lam_hi, high.radius))
    vector = low.vector
    while True:
        lam = 0.5 * (lam_lo + lam_hi)
        result = spectral_radius(op.K(lam), start=vector)
        if not result.converged:
            raise NoConvergence("Power iteration failed at lam={}"
                                .format(lam))
        vector = result.vector
        history.append((lam, result.radius))
        if (abs(result.radius - 1.0) < RADIUS_TOLERANCE or
                lam_hi - lam_lo < BRACKET_TOLERANCE):
            break
        if result.radius > 1.0:
            lam_lo = lam
        else:
            lam_hi = lam
    logger.info("Malthusian parameter %.12g after %d bisection steps "
                "(|r - 1| = %.3g)", lam, len(history) - 2,
                abs(result.radius - 1.0))
    return SpectralSolution(lam, vector, grid, history,
                            abs(result.radius - 1.0))


def _birth_profile(op, lam):
    result = spectral_radius(op.J(lam))
    if not result.converged:
        raise NoConvergence("Power iteration for J did not converge at "
                            "lam={}".format(lam))
    f = result.vector / op.grid.integrate(result.vector)
    return f, abs(result.radius - 1.0)


def stationary_birth_profile(law, model, grid, lam, operator=None,
                             threads=1):
    """Perron vector of J at lam, normalised to unit integral.

    :raises NoConvergence: if the power iteration doesn't converge
    """
    op = operator or RenewalOperator(law, model, grid, threads=threads)
    return _birth_profile(op, lam)[0]


def age_grid(model, levels=512):
    """Uniform levels on [0, max a_hi], shared by spectral and transport."""
    return quadrature.AgeGrid(model.global_support()[1], levels)


def dual_eigenfunction(law, model, grid, lam, v_tilde, ages):
    """v(x_b, a_k) on grid nodes x age levels.

    Each level interval intersected with the support is integrated with
    DUAL_ORDER point Gauss-Legendre and the tails are accumulated from the
    top level down.
    """
    x = grid.nodes
    lo, hi = (np.asarray(v) for v in model.support(x))
    levels = ages.ages
    starts = np.clip(levels[None, :-1], lo[:, None], hi[:, None])
    ends = np.clip(levels[None, 1:], lo[:, None], hi[:, None])
    s, w = quadrature.composite_gauss_legendre(starts, ends, 1, DUAL_ORDER)
    xx = x[:, None, None]
    q = np.asarray(model.density(np.broadcast_to(xx, s.shape), s))
    daughters = 0.5 * law._flow(xx, s)
    daughters = np.where(np.isfinite(daughters), daughters, grid.lo)
    integrand = (2.0 * q * grid.interpolate(v_tilde, daughters) *
                 np.exp(-lam * (s - levels[None, :-1, None])))
    pieces = np.sum(w * integrand, axis=-1)
    v = np.zeros((grid.n, ages.levels))
    decay = math.exp(-lam * ages.da)
    for k in range(ages.levels - 2, -1, -1):
        v[:, k] = pieces[:, k] + decay * v[:, k + 1]
    return v


def level_dual(op, lam, v_tilde):
    """v(x_b, a_k) for an operator on the level rule.

    v at level m sums e^(-lam (a_k - a_m)) 2 q(x_b, a_k) v_tilde(S_a_k x_b)
    da over the levels k > m, the dual of one transport step exactly.
    """
    sums = op.level_sums(v_tilde)
    v = np.zeros_like(sums)
    decay = math.exp(-lam * op.age_grid.da)
    for k in range(sums.shape[1] - 2, -1, -1):
        v[:, k] = decay * (sums[:, k + 1] + v[:, k + 1])
    return v


def stable_distribution(f_tilde, lam, grid, ages, model, v_full=None):
    """f_i(x_b, a) = e^(-lam a) f_tilde(x_b) on the support, scaled so that
    the integral of f_i v is one when v_full is given."""
    mask = ages.mask(np.asarray(model.support(grid.nodes)[1]))
    f = np.where(mask, np.exp(-lam * ages.ages)[None, :] *
                 np.asarray(f_tilde)[:, None], 0.0)
    if v_full is not None:
        f = f / quadrature.integrate_table(grid, ages, f * v_full)
    return f


def survival_table(model, grid, ages):
    return np.asarray(model.survival(grid.nodes[:, None],
                                     ages.ages[None, :]))


def check_initial_density(u0, model, grid, ages, phi=None):
    """Reject an initial density that can't be weighted by Psi = 1 / Phi.

    Mass on the last age cell before a_hi(x_b), past a_hi(x_b) or where Phi
    underflows is refused.

    :returns: the survival table
    :raises NegativeInput: if u0 has negative entries
    :raises WeightDivergence: if u0 has mass too close to a_hi
    """
    if np.any(u0 < 0):
        raise NegativeInput("Initial density has negative values")
    if phi is None:
        phi = survival_table(model, grid, ages)
    a_hi = np.asarray(model.support(grid.nodes)[1])
    edge = (ages.last_cell(a_hi) | ~ages.mask(a_hi) |
            (phi < cycle_models.SURVIVAL_FLOOR))
    bad = (u0 > 0) & edge
    if np.any(bad):
        i, k = (int(v[0]) for v in np.nonzero(bad))
        raise WeightDivergence(
            "Initial density has mass at x_b={:.6g}, a={:.6g}, within one "
            "age cell of the longest cycle".format(grid.nodes[i],
                                                    ages.ages[k]))
    return phi


def aeg_functional(u0, v_full, model, grid, ages, phi=None):
    """alpha(u0) = integral of u0 Psi v.

    :raises NegativeInput: if u0 has negative entries
    :raises WeightDivergence: if u0 has mass on the last age cell
    """
    u0 = np.asarray(u0, dtype=float)
    phi = check_initial_density(u0, model, grid, ages, phi)
    mass = u0 > 0
    psi = np.where(mass, 1.0 / np.where(mass, phi, 1.0), 0.0)
    return quadrature.integrate_table(grid, ages, u0 * psi * v_full)


def _sandwich(v_full, phi, ages):
    inside = phi > 0
    # stay two levels away from the maximal cycle length
    clear = inside & (np.roll(phi, -2, axis=1) > 0)
    clear[:, -2:] = False
    ratio = v_full[clear] / phi[clear]
    if ratio.size == 0:
        return (np.nan, np.nan)
    return (float(ratio.min()), float(ratio.max()))


def solve(law, model, grid, levels=512, threads=1, age_rule='gauss'):
    """The full spectral pipeline: lam, both profiles, both eigenfunctions
    and the diagnostics.

    age_rule 'levels' integrates in a over the age levels, giving the
    solution the transport step conserves exactly.

    :raises AssumptionViolation: if (A1)-(A6) fail
    :raises BracketFailure, NoConvergence: numerical failures
    """
    if age_rule not in AGE_RULES:
        raise ConfigError("Unknown age rule '{}' (known: {})"
                          .format(age_rule, ", ".join(AGE_RULES)))
    ages = age_grid(model, levels)
    op = RenewalOperator(law, model, grid, threads=threads,
                         ages=ages if age_rule == 'levels' else None)
    solution = solve_malthus(law, model, grid, operator=op)
    lam = solution.lam
    f_tilde, r_J = _birth_profile(op, lam)
    if age_rule == 'levels':
        v_full = level_dual(op, lam, solution.v_tilde)
    else:
        v_full = dual_eigenfunction(law, model, grid, lam,
                                    solution.v_tilde, ages)
    phi = survival_table(model, grid, ages)
    solution.f_tilde = f_tilde
    solution.ages = ages
    solution.v_full = v_full
    solution.f_full = stable_distribution(f_tilde, lam, grid, ages, model,
                                          v_full)
    solution.phi_table = phi
    solution.phi_sandwich = _sandwich(v_full, phi, ages)
    solution.mean_cycle = model.mean_cycle_length()
    solution.age_rule = age_rule
    solution.residuals['r_J'] = r_J
    solution.residuals['adjoint_gap'] = op.adjoint_gap(lam)
    logger.info("Spectral solution: %r", solution)
    return solution

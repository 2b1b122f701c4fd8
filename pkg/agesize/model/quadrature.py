"""Quadrature and grids shared by the spectral and transport modules.

QuadratureGrid places nodes at composite Gauss-Legendre points on the size
window.  Functions on the grid are read as piecewise-linear interpolants
between the nodes (constant on the two end caps), and the grid weights are the
integrals of the corresponding cardinal functions.  AgeGrid is the uniform
grid of age levels used for two dimensional tables.
"""

import functools

import numpy as np

from agesize.core.exceptions import ConfigError

DEFAULT_PANELS = 8
DEFAULT_ORDER = 32


@functools.lru_cache(maxsize=None)
def gauss_legendre(order):
    """Reference Gauss-Legendre nodes and weights on [-1, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def composite_gauss_legendre(lo, hi, panels=DEFAULT_PANELS,
                             order=DEFAULT_ORDER):
    """Composite Gauss-Legendre rule on [lo, hi] with equal panels.

    lo and hi may be arrays (broadcast together); the rule is returned with an
    extra trailing axis of length panels * order.  Intervals with hi <= lo get
    zero weights.

    :param lo: lower limits
    :param hi: upper limits
    :param panels: number of equal sub-intervals
    :param order: nodes per sub-interval
    :returns: (nodes, weights)
    """
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float),
                                 np.asarray(hi, dtype=float))
    ref_x, ref_w = gauss_legendre(order)
    width = np.maximum(hi - lo, 0.0) / panels
    starts = lo[..., None] + width[..., None] * np.arange(panels)
    half = 0.5 * width[..., None, None]
    nodes = (starts[..., None] + half) + half * ref_x
    weights = np.broadcast_to(half * ref_w, nodes.shape)
    shape = lo.shape + (panels * order, )
    return nodes.reshape(shape), np.array(weights).reshape(shape)


def integrate(fn, lo, hi, panels=DEFAULT_PANELS, order=DEFAULT_ORDER):
    """Integrate a vectorised fn over [lo, hi] (arrays broadcast)."""
    nodes, weights = composite_gauss_legendre(lo, hi, panels, order)
    return np.sum(fn(nodes) * weights, axis=-1)


class QuadratureGrid(object):
    """Nodes and weights on the size window [lo, hi]."""

    def __init__(self, lo, hi, panels=DEFAULT_PANELS, order=DEFAULT_ORDER):
        if not 0 < lo < hi:
            raise ConfigError("Grid needs 0 < lo < hi, got {}, {}"
                             .format(lo, hi))
        if panels < 1 or order < 2:
            raise ConfigError("Grid needs panels >= 1 and order >= 2")
        self.lo = float(lo)
        self.hi = float(hi)
        self.panels = int(panels)
        self.order = int(order)
        nodes, _ = composite_gauss_legendre(self.lo, self.hi, self.panels,
                                            self.order)
        self.nodes = nodes
        self.n = nodes.size
        self.weights = self._cardinal_weights(nodes, self.lo, self.hi)
        self.nodes.flags.writeable = False
        self.weights.flags.writeable = False

    @classmethod
    def with_size(cls, lo, hi, n, order=DEFAULT_ORDER):
        """A grid of about n nodes: panels of `order` nodes, or a single
        panel when n is smaller than order."""
        n = int(n)
        if n < order:
            return cls(lo, hi, panels=1, order=max(n, 2))
        return cls(lo, hi, panels=max(1, n // order), order=order)

    @staticmethod
    def _cardinal_weights(nodes, lo, hi):
        # integrals of the hat functions, end caps are constant
        gaps = np.diff(nodes)
        weights = np.empty_like(nodes)
        weights[1:-1] = 0.5 * (gaps[:-1] + gaps[1:])
        weights[0] = (nodes[0] - lo) + 0.5 * gaps[0]
        weights[-1] = (hi - nodes[-1]) + 0.5 * gaps[-1]
        return weights

    def hat(self, points):
        """Interpolation stencil for points.

        :param points: array of sizes (any shape); values outside the grid
            use the end node.
        :returns: (left, right, w_left, w_right) arrays of points' shape
        """
        points = np.asarray(points, dtype=float)
        nodes = self.nodes
        right = np.clip(np.searchsorted(nodes, points, side='right'),
                        1, self.n - 1)
        left = right - 1
        x0 = nodes[left]
        x1 = nodes[right]
        t = np.clip((points - x0) / (x1 - x0), 0.0, 1.0)
        return left, right, 1.0 - t, t

    def interpolate(self, values, points):
        """Evaluate the piecewise-linear interpolant of node values."""
        values = np.asarray(values, dtype=float)
        left, right, wl, wr = self.hat(points)
        return wl * values[left] + wr * values[right]

    def integrate(self, values, axis=0):
        values = np.asarray(values, dtype=float)
        return np.tensordot(self.weights, values, axes=([0], [axis]))

    def inner(self, f, g):
        return float(np.sum(self.weights * f * g))

    def norm(self, f):
        return np.sqrt(self.inner(f, f))

    def cdf(self, density):
        """Cumulative integral of a node profile at the nodes, normalised to
        end at one (trapezoid between nodes, caps included)."""
        density = np.asarray(density, dtype=float)
        parts = np.concatenate((
            [(self.nodes[0] - self.lo) * density[0]],
            0.5 * np.diff(self.nodes) * (density[:-1] + density[1:])))
        cumulative = np.cumsum(parts)
        total = cumulative[-1] + (self.hi - self.nodes[-1]) * density[-1]
        return cumulative / total

    def __repr__(self):
        return ("QuadratureGrid([{}, {}], panels={}, order={})"
                .format(self.lo, self.hi, self.panels, self.order))


class AgeGrid(object):
    """Uniform age levels a_k = k * da on [0, a_max]."""

    def __init__(self, a_max, levels=512):
        if a_max <= 0 or levels < 2:
            raise ConfigError("AgeGrid needs a_max > 0 and levels >= 2")
        self.levels = int(levels)
        self.a_max = float(a_max)
        self.da = self.a_max / (self.levels - 1)
        self.ages = np.arange(self.levels) * self.da
        self.ages.flags.writeable = False

    def mask(self, a_hi):
        """Boolean (len(a_hi), levels) table of a_k <= a_hi(x_b)."""
        return self.ages[None, :] <= np.asarray(a_hi)[:, None]

    def last_cell(self, a_hi):
        """Levels whose next level lies beyond a_hi: the last cell before
        the maximal cycle length."""
        a_hi = np.asarray(a_hi)[:, None]
        return (self.ages[None, :] <= a_hi) & (
            self.ages[None, :] + self.da > a_hi)

    def __repr__(self):
        return "AgeGrid(a_max={}, levels={})".format(self.a_max, self.levels)


def integrate_table(grid, ages, table):
    """Integral of a (nodes x levels) table: grid weights in size, rectangle
    rule in age."""
    table = np.asarray(table, dtype=float)
    return float(ages.da * np.dot(grid.weights, table.sum(axis=1)))

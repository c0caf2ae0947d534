"""Core state types and loss-controlled conversions between them.

Three views of the same mass: cell-averaged densities on a uniform grid
(the PDE side), monotone quantile node vectors (the transport side, where
the quadratic Wasserstein distance is exact), and finite unions of
intervals (the free-boundary side).  Conversions are mass-exact by
construction; everything is treated as an immutable value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

#: density threshold that defines "support" for grid data; strictly
#: positive so denormal tails of explicit PDE output do not count.
EPS_SUPP = 1e-8


def _ball_volume(d):
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def _locked(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass
class GridSpec:
    """Uniform 1D grid (or radial mesh on [0, r_max] when dim > 1)."""

    x_lo: float
    x_hi: float
    n_cells: int
    dim: int = 1

    def __post_init__(self):
        if self.n_cells < 1 or not self.x_hi > self.x_lo:
            raise ValueError("grid needs x_hi > x_lo and at least one cell")
        if self.dim > 1 and self.x_lo != 0.0:
            raise ValueError("radial grids must start at r = 0")

    @property
    def dx(self):
        return (self.x_hi - self.x_lo) / self.n_cells

    @property
    def edges(self):
        return np.linspace(self.x_lo, self.x_hi, self.n_cells + 1)

    @property
    def centers(self):
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def cell_measures(self):
        """Cell lengths in 1D, annular shell volumes in radial mode."""
        e = self.edges
        if self.dim == 1:
            return np.full(self.n_cells, self.dx)
        return _ball_volume(self.dim) * (e[1:] ** self.dim - e[:-1] ** self.dim)


@dataclass
class GridDensity:
    """Nonnegative cell-averaged density on a uniform grid."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_cells,):
            raise ValueError("values must have one entry per cell")
        if np.min(v) < 0.0:
            raise ValueError("density values must be nonnegative")
        self.values = _locked(v)

    @property
    def mass(self):
        return float(np.dot(self.values, self.grid.cell_measures))

    @property
    def dx(self):
        return self.grid.dx

    @property
    def centers(self):
        return self.grid.centers

    def support_extent(self, eps=EPS_SUPP):
        """Leftmost and rightmost cell edges where the density exceeds eps."""
        idx = np.flatnonzero(self.values > eps)
        if idx.size == 0:
            return (math.nan, math.nan)
        e = self.grid.edges
        return (float(e[idx[0]]), float(e[idx[-1] + 1]))

    def with_values(self, values):
        return GridDensity(self.grid, values)

    def to_csv(self, path):
        write_csv(path, ["x_center", "value"],
                  np.column_stack([self.centers, self.values]))


@dataclass
class QuantileRep:
    """Monotone samples of the inverse distribution function.

    ``nodes[j]`` is the position below which mass ``j * w`` sits, with
    cell mass ``w = total_mass / n``.  Between consecutive nodes the
    represented density is the constant ``w / gap``.  Feasibility for the
    hard congestion constraint reads ``gap >= w`` everywhere.
    """

    total_mass: float
    nodes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise ValueError("need at least two nodes")
        if self.total_mass <= 0.0:
            raise ValueError("total mass must be positive")
        if np.any(np.diff(x) < 0.0):
            raise ValueError("nodes must be nondecreasing")
        self.nodes = _locked(x)

    @property
    def n(self):
        return self.nodes.size - 1

    @property
    def w(self):
        return self.total_mass / self.n

    @property
    def gaps(self):
        return np.diff(self.nodes)

    @property
    def max_density(self):
        g = self.gaps
        pos = g[g > 0]
        if pos.size < g.size:
            return math.inf
        return float(self.w / np.min(pos))

    def excess_mass(self):
        """Mass sitting above density one: sum of (w - gap)+ over gaps."""
        return float(np.sum(np.maximum(self.w - self.gaps, 0.0)))

    def translated(self, s):
        return QuantileRep(self.total_mass, self.nodes + s)

    def to_csv(self, path):
        levels = np.linspace(0.0, self.total_mass, self.n + 1)
        write_csv(path, ["mass_level", "node"],
                  np.column_stack([levels, self.nodes]))


@dataclass
class Patch:
    """Finite union of disjoint intervals (1D) or centered annuli (radial)."""

    intervals: tuple
    dim: int = 1

    def __post_init__(self):
        iv = tuple((float(a), float(b)) for a, b in self.intervals)
        prev = -math.inf
        for a, b in iv:
            if not b > a:
                raise ValueError("intervals must have positive length")
            if not a >= prev:
                raise ValueError("intervals must be sorted and disjoint")
            prev = b
        if self.dim > 1 and iv and iv[0][0] < 0.0:
            raise ValueError("radial patches live on r >= 0")
        self.intervals = iv

    @property
    def volume(self):
        if self.dim == 1:
            return float(sum(b - a for a, b in self.intervals))
        w = _ball_volume(self.dim)
        return float(sum(w * (b ** self.dim - a ** self.dim)
                         for a, b in self.intervals))

    @property
    def endpoints(self):
        return np.array([e for ab in self.intervals for e in ab])

    @property
    def hull(self):
        if not self.intervals:
            raise ValueError("empty patch has no hull")
        return (self.intervals[0][0], self.intervals[-1][1])

    def indicator(self, grid: GridSpec) -> GridDensity:
        """Cell-averaged indicator of the patch on the given grid."""
        e = grid.edges
        vals = np.zeros(grid.n_cells)
        for a, b in self.intervals:
            lo = np.clip(e[:-1], a, b)
            hi = np.clip(e[1:], a, b)
            vals += (hi - lo) / grid.dx
        return GridDensity(grid, vals)


@dataclass
class RunLedger:
    """Per-step diagnostics of an evolution run.

    Columns: step index, time, free energy and its internal/potential
    split, Wasserstein increment from the previous recorded state, mass,
    support extent, and the mass excess above density one.
    """

    rows: list = field(default_factory=list)

    COLUMNS = ("step", "t", "E", "S", "P", "w2_inc", "mass",
               "supp_lo", "supp_hi", "excess")

    def append(self, step, t, E, S, P, w2_inc, mass, supp_lo, supp_hi, excess):
        if self.rows and not t > self.rows[-1][1]:
            raise ValueError("ledger times must be strictly increasing")
        self.rows.append((int(step), float(t), float(E), float(S), float(P),
                          float(w2_inc), float(mass), float(supp_lo),
                          float(supp_hi), float(excess)))

    def column(self, name):
        j = self.COLUMNS.index(name)
        return np.array([r[j] for r in self.rows])

    def validate(self, mass_rtol=1e-10):
        t = self.column("t")
        if np.any(np.diff(t) <= 0):
            raise ValueError("ledger times not strictly increasing")
        m = self.column("mass")
        if m.size and np.max(np.abs(m - m[0])) > mass_rtol * abs(m[0]):
            raise ValueError("ledger mass drifts beyond tolerance")
        return True

    def to_csv(self, path):
        write_csv(path, list(self.COLUMNS), self.rows)


def write_csv(path, header, rows):
    """Deterministic CSV writer (repr-exact floats, atomic replace)."""
    import os

    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")
    os.replace(tmp, path)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# constructors and conversions
# ---------------------------------------------------------------------------

def make_grid_density(shape_spec, grid_spec: GridSpec) -> GridDensity:
    """Cell-average a sum of boxes onto a grid.

    ``shape_spec`` is ``{"boxes": [(a, b, height), ...]}`` with an optional
    ``"normalize": M`` rescaling the result to total mass ``M``.  Boxes are
    cell-averaged exactly, so partially covered boundary cells carry the
    correct fraction and the total mass is exact in 1D.
    """
    boxes = shape_spec.get("boxes", ())
    normalize = shape_spec.get("normalize", None)
    if normalize is not None and normalize <= 0.0:
        raise ValueError("requested mass must be positive")
    e = grid_spec.edges
    vals = np.zeros(grid_spec.n_cells)
    for a, b, h in boxes:
        if not b > a:
            raise ValueError("box must have positive length")
        if a < grid_spec.x_lo - 1e-12 or b > grid_spec.x_hi + 1e-12:
            raise ValueError("grid does not cover the requested shape")
        lo = np.clip(e[:-1], a, b)
        hi = np.clip(e[1:], a, b)
        vals += h * (hi - lo) / grid_spec.dx
    rho = GridDensity(grid_spec, vals)
    if rho.mass <= 0.0:
        raise ValueError("shape has empty support")
    if normalize is not None:
        rho = rho.with_values(vals * (normalize / rho.mass))
    return rho


def to_quantile(rho: GridDensity, n: int) -> QuantileRep:
    """Invert the cell-wise CDF at ``n + 1`` equispaced mass levels.

    The density is constant inside each cell, so the CDF is piecewise
    linear and the inversion is exact and monotone by construction.
    ``nodes[0]``/``nodes[n]`` are the support edges.
    """
    if rho.grid.dim != 1:
        raise ValueError("quantile representation requires 1D geometry")
    if n < 2:
        raise ValueError("need at least two quantile cells")
    e = rho.grid.edges
    cdf = np.concatenate([[0.0], np.cumsum(rho.values * rho.grid.dx)])
    # invert the cumulative at its own floating-point total so the top
    # level lands exactly on the support edge, not past trailing zeros
    M = float(cdf[-1])
    if M <= 0.0:
        raise ValueError("cannot build quantiles of a zero-mass density")
    targets = np.linspace(0.0, M, n + 1)

    nodes = np.empty(n + 1)
    # interior + bottom levels: last edge with cdf <= t, so a level that
    # lands exactly on a zero-density run resolves to the run's right end
    idx = np.searchsorted(cdf, targets[:-1], side="right") - 1
    idx = np.clip(idx, 0, rho.grid.n_cells - 1)
    over = targets[:-1] - cdf[idx]
    dens = rho.values[idx]
    step = np.divide(over, dens, out=np.zeros_like(over), where=over > 0)
    nodes[:-1] = e[idx] + step
    # top level: first edge reaching full mass = right support edge
    itop = int(np.searchsorted(cdf, M, side="left"))
    nodes[-1] = e[min(itop, rho.grid.n_cells)]
    nodes = np.maximum.accumulate(nodes)
    return QuantileRep(M, nodes)


def to_grid(q: QuantileRep, grid_spec: GridSpec) -> GridDensity:
    """Cell-average the piecewise-constant quantile density onto a grid.

    Exact: the cell value is the CDF increment over the cell divided by
    the cell length, so total mass is preserved to round-off as long as
    the grid covers the support (checked).
    """
    if grid_spec.dim != 1:
        raise ValueError("quantile data reconstructs onto 1D grids")
    if q.nodes[0] < grid_spec.x_lo - 1e-12 or q.nodes[-1] > grid_spec.x_hi + 1e-12:
        raise ValueError("grid does not cover the quantile support")
    levels = np.linspace(0.0, q.total_mass, q.n + 1)
    cdf_at_edges = np.interp(grid_spec.edges, q.nodes, levels,
                             left=0.0, right=q.total_mass)
    vals = np.diff(cdf_at_edges) / grid_spec.dx
    vals = np.maximum(vals, 0.0)
    return GridDensity(grid_spec, vals)

"""Counter-based space-time white noise on dyadic cells.

Every standard normal is a pure function of the key
(seed, replica, time cell, space cell, substep): the key is folded through
SplitMix64 finalizer rounds into 64 random bits, the top 53 bits give a
uniform in (0, 1), and the normal comes from the inverse normal CDF
(``scipy.special.ndtri``). Nothing is stateful, so cells can be read in any
order, by any number of workers, and regenerated at will.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.special import ndtri

from .kernel import WaveKernel

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


def _mix(z):
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _u64(values):
    # two's complement view, so negative space cells are valid keys
    return np.asarray(values, dtype=np.int64).view(np.uint64)


def _prefix(seed, replicas, j):
    h = _mix(np.full(np.shape(replicas), int(seed) & _MASK, dtype=np.uint64))
    h = _mix(h ^ _u64(replicas))
    return _mix(h ^ _u64(j))


def _finish(prefix, cells, substeps):
    h = _mix(prefix ^ cells)
    h = _mix(h ^ substeps)
    u = ((h >> _S11).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u)


class NoiseKey(NamedTuple):
    seed: int
    replica: int
    j: int
    l: int
    substep: int


def gaussian_at(key):
    """Standard normal variate addressed by ``key``."""
    seed, replica, j, l, substep = key
    with np.errstate(over="ignore"):
        pre = _prefix(seed, np.array([replica], dtype=np.int64), np.array([j], dtype=np.int64))
        z = _finish(pre, _u64(np.array([l], dtype=np.int64)), _u64(np.array([substep], dtype=np.int64)))
    return float(z[0])


def gaussian_block(seed, replicas, j, cells, substeps):
    """Normals for every (replica, cell, substep) of time row ``j``: shape (R, C, s)."""
    replicas = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
    cells = np.asarray(cells, dtype=np.int64)
    with np.errstate(over="ignore"):
        pre = _prefix(seed, replicas, np.full(replicas.shape, j, dtype=np.int64))
        return _finish(pre[:, None, None], _u64(cells)[None, :, None],
                       np.arange(substeps, dtype=np.uint64)[None, None, :])


@dataclass(frozen=True)
class NoiseGrid:
    """White-noise increments on the level-n dyadic lattice.

    Cell (j, l) is [j dt, (j+1) dt) x [(l - 1/2) dx, (l + 1/2) dx) with
    dt = 2^-n and dx = kappa 2^-n. Each cell carries ``substeps`` independent
    increments of variance dt*dx/substeps, the Brownian skeleton of the strip
    over that cell. ``replica`` may be one id or a sequence of ids; rows are
    returned with one leading entry per replica. ``n_steps`` and ``cells``
    (inclusive lo, hi) bound the extent when given.
    """

    seed: int
    replica: object
    n: int
    kernel: WaveKernel = WaveKernel()
    substeps: int = 4
    n_steps: Optional[int] = None
    cells: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.n < 0:
            raise ValueError("level n must be >= 0")

    @property
    def replicas(self):
        return np.atleast_1d(np.asarray(self.replica, dtype=np.int64))

    @property
    def dt(self):
        return 2.0 ** -self.n

    @property
    def dx(self):
        return self.kernel.kappa * 2.0 ** -self.n

    @property
    def scale(self):
        return math.sqrt(self.dt * self.dx / self.substeps)

    def lattice(self):
        return (self.n, self.kernel.kappa, self.substeps)

    def check_extent(self, j, cells):
        if j < 0 or (self.n_steps is not None and j >= self.n_steps):
            raise IndexError("time cell %d outside extent" % j)
        if self.cells is not None:
            cells = np.asarray(cells)
            if cells.size and (cells.min() < self.cells[0] or cells.max() > self.cells[1]):
                raise IndexError("space cell outside extent %r" % (self.cells,))

    def row(self, j, cells):
        """Increments for time row j over ``cells``: array (R, C, s)."""
        self.check_extent(j, cells)
        return self.scale * gaussian_block(self.seed, self.replicas, j, cells, self.substeps)

    def sources(self, j, cells):
        """(seed, replica) that resolves each cell, shape (R, C, 2)."""
        cells = np.asarray(cells)
        out = np.empty((self.replicas.size, cells.size, 2), dtype=np.int64)
        out[..., 0] = self.seed
        out[..., 1] = self.replicas[:, None]
        return out


def cell_increments(grid, j, l):
    """Ordered substep increments of one cell: shape (s,), or (R, s) for several replicas."""
    inc = grid.row(j, np.array([l], dtype=np.int64))[:, 0, :]
    return inc[0] if np.ndim(grid.replica) == 0 else inc


@dataclass(frozen=True)
class Rectangle:
    """Cells with 0 <= j < j_stop and l_lo <= l <= l_hi."""

    j_stop: int
    l_lo: int
    l_hi: int

    def contains(self, j, cells):
        cells = np.asarray(cells)
        return (0 <= j < self.j_stop) & (cells >= self.l_lo) & (cells <= self.l_hi)

    def cells(self):
        for j in range(self.j_stop):
            for l in range(self.l_lo, self.l_hi + 1):
                yield j, l


class SplicedNoise:
    """Noise equal to ``inside`` on ``region`` and to ``outside`` elsewhere."""

    def __init__(self, inside, outside, region):
        if inside.lattice() != outside.lattice():
            raise ValueError("spliced grids must share n, kappa and substeps")
        if inside.replicas.size != outside.replicas.size:
            raise ValueError("spliced grids must carry the same number of replicas")
        self.inside = inside
        self.outside = outside
        self.region = region
        self.n = inside.n
        self.kernel = inside.kernel
        self.substeps = inside.substeps
        self.replica = inside.replica

    replicas = property(lambda self: self.inside.replicas)
    dt = property(lambda self: self.inside.dt)
    dx = property(lambda self: self.inside.dx)
    scale = property(lambda self: self.inside.scale)

    def lattice(self):
        return self.inside.lattice()

    def row(self, j, cells):
        mask = self.region.contains(j, cells)
        if mask.all():
            return self.inside.row(j, cells)
        if not mask.any():
            return self.outside.row(j, cells)
        return np.where(mask[None, :, None], self.inside.row(j, cells), self.outside.row(j, cells))

    def sources(self, j, cells):
        mask = self.region.contains(j, cells)
        return np.where(mask[None, :, None], self.inside.sources(j, cells),
                        self.outside.sources(j, cells))


class TracingNoise:
    """Wraps a noise source and records every (row, cells) request."""

    def __init__(self, base):
        self.base = base
        self.trace = []

    def __getattr__(self, name):
        return getattr(self.base, name)

    def row(self, j, cells):
        self.trace.append((int(j), tuple(int(c) for c in np.asarray(cells))))
        return self.base.row(j, cells)


def agree_on(a, b, region):
    """True iff every cell of ``region`` resolves to the same key and variates in a and b."""
    if a.lattice() != b.lattice():
        raise ValueError("noise grids differ in lattice parameters %r vs %r"
                         % (a.lattice(), b.lattice()))
    by_row = {}
    for j, l in region.cells():
        by_row.setdefault(j, []).append(l)
    for j, cells in by_row.items():
        cells = np.asarray(cells, dtype=np.int64)
        if not np.array_equal(a.sources(j, cells), b.sources(j, cells)):
            return False
        if not np.array_equal(a.row(j, cells), b.row(j, cells)):
            return False
    return True

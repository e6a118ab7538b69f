"""Dyadic light-cone scheme for the stochastic wave equation.

Lattice: time step dt = 2^-n, space step dx = kappa 2^-n, so the light cone
advances exactly one cell per step. Node k of row m sits at (m dt, k dx).

Noise enters through the strip integrals I_{j,l} of each cell, produced by
an Euler map of the in-cell equation dX = 1/2 sigma(X) dW. The field is

    X_k(m) = initial_wave(m dt, k dx) + sum_{j<m} sum_l 1/2 w(m-j, l-k) I_{j,l}

with w in {1, 1/2, 0}. Strip integrals are rounded to integers in units of
2^-40 and the cone sums are kept in int64, in units of 2^-42 of the field.
Integer sums are exact, so the incremental wavefront update and the direct
cone sum agree bit for bit whatever the summation order.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .kernel import InitialData, SigmaSpec, WaveKernel, initial_wave
from .noise import NoiseGrid

I_BITS = 40
ACC_UNIT = 2.0 ** -42
I_LIMIT = 2.0 ** 18
ACC_LIMIT = 2 ** 60
_TOL = 1e-9


class GuardBandError(ValueError):
    pass


def phi_psi(n, x, t, kernel=None):
    """Nearest dyadic space center and dyadic time floor at level n."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    dx = (kernel.kappa if kernel is not None else 1.0) * 2.0 ** -n
    phi = np.floor(np.asarray(x, dtype=float) / dx + 0.5) * dx
    psi = np.floor(np.asarray(t, dtype=float) * 2.0 ** n) * 2.0 ** -n
    return phi[()], psi[()]


def gamma_weight(d, a):
    """Discrete kernel weight: 1 inside the cone, 1/2 on its edge, 0 outside."""
    d = np.asarray(d)
    if np.any(d < 0):
        raise ValueError("lag d must be >= 0")
    a = np.abs(np.asarray(a))
    out = np.where(a < d, 1.0, np.where(a == d, 0.5, 0.0))
    return out[()]


def _weight2(d, a):
    # 2*w as an integer
    a = np.abs(a)
    return np.where(a < d, 2, np.where(a == d, 1, 0)).astype(np.int64)


def evolve_cell(x0, sigma, increments, n=None, kernel=None):
    """Euler map of one cell: returns (x_end, strip integral I).

    ``increments`` holds the substep increments on its last axis; ``x0``
    broadcasts against the remaining axes. n and kernel are accepted for
    signature symmetry; the increments already carry the cell scale.
    """
    inc = np.asarray(increments, dtype=float)
    x = np.array(np.broadcast_to(x0, inc.shape[:-1]), dtype=float)
    total = np.zeros_like(x)
    for i in range(inc.shape[-1]):
        xi = inc[..., i]
        s = sigma(x)
        total += s * xi
        x += 0.5 * s * xi
    if x.ndim == 0:
        return float(x), float(total)
    return x, total


def quantize(I):
    I = np.asarray(I)
    if not np.all(np.abs(I) < I_LIMIT):
        raise OverflowError("strip integral beyond %g; field left the representable range" % I_LIMIT)
    return np.rint(I * 2.0 ** I_BITS).astype(np.int64)


@dataclass(frozen=True)
class SchemeConfig:
    """Lattice level n, horizon T, domain [center - L, center + L], substeps.

    ``obs_radius`` is the half-width of the reported window around
    ``center``; it defaults to everything the guard band allows.
    """

    n: int
    T: float
    L: float
    substeps: int = 4
    kernel: WaveKernel = WaveKernel()
    obs_times: Optional[Sequence[float]] = None
    obs_radius: Optional[float] = None
    center: float = 0.0

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be positive")
        m = self.T * 2.0 ** self.n
        if abs(m - round(m)) > _TOL * max(1.0, m):
            raise ValueError("horizon T=%r is not a multiple of 2^-%d" % (self.T, self.n))
        times = self.times
        for t in times:
            mt = t * 2.0 ** self.n
            if abs(mt - round(mt)) > _TOL * max(1.0, mt):
                raise ValueError("observation time %r is not dyadic at level %d" % (t, self.n))
            if t < 0 or t > self.T + _TOL:
                raise ValueError("observation time %r outside [0, T]" % t)
        c = self.center / self.dx
        if abs(c - round(c)) > _TOL * max(1.0, abs(c)):
            raise ValueError("center must be a lattice node")
        if self.radius < 0:
            raise GuardBandError("domain too small: L=%r < kappa*T=%r" % (self.L, self.kernel.kappa * self.T))
        if self.obs_radius is not None and self.obs_radius > self.L - self.kernel.kappa * self.T + _TOL:
            raise GuardBandError("guard band violated: need L >= obs_radius + kappa*T (%r < %r)"
                                 % (self.L, self.obs_radius + self.kernel.kappa * self.T))

    @property
    def dt(self):
        return 2.0 ** -self.n

    @property
    def dx(self):
        return self.kernel.kappa * 2.0 ** -self.n

    @property
    def n_steps(self):
        return int(round(self.T * 2.0 ** self.n))

    @property
    def times(self):
        return tuple(float(t) for t in (self.obs_times if self.obs_times is not None else (self.T,)))

    @property
    def obs_steps(self):
        return [int(round(t * 2.0 ** self.n)) for t in self.times]

    @property
    def half_cells(self):
        return int(math.floor(self.L / self.dx + _TOL))

    @property
    def center_cell(self):
        return int(round(self.center / self.dx))

    @property
    def radius(self):
        """Half-width, in cells, of the reported window."""
        if self.obs_radius is None:
            return self.half_cells - self.n_steps
        return int(math.floor(self.obs_radius / self.dx + _TOL))

    @property
    def cells(self):
        c = self.center_cell
        return np.arange(c - self.half_cells, c + self.half_cells + 1, dtype=np.int64)

    @property
    def obs_cells(self):
        c = self.center_cell
        return np.arange(c - self.radius, c + self.radius + 1, dtype=np.int64)

    def to_dict(self):
        return {"n": self.n, "T": self.T, "L": self.L, "substeps": self.substeps,
                "kappa": self.kernel.kappa, "obs_times": list(self.times),
                "obs_radius": self.obs_radius, "center": self.center}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kappa = d.pop("kappa", 1.0)
        obs = d.pop("obs_times", None)
        return cls(kernel=WaveKernel(kappa), obs_times=tuple(obs) if obs is not None else None, **d)


def sigma_descriptor(sigma):
    if sigma.kind == "custom":
        return {"kind": "custom", "name": sigma.params.get("name", "custom"), "lip": sigma._lip}
    return sigma.to_dict()


def config_hash(config, init, sigma):
    blob = json.dumps({"scheme": config.to_dict(), "init": init.to_dict(),
                       "sigma": sigma_descriptor(sigma)}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class LatticeState:
    """Node values of row m for a block of replicas.

    ``acc`` and ``acc_prev`` hold the cone sums of rows m and m-1 (int64,
    units of 2^-42). Only the index window [lo, hi] is valid; it shrinks by
    one cell per step. With ``history`` set, every quantized row of strip
    integrals is kept for direct reconstruction.
    """

    def __init__(self, config, init, replicas, keep_history=False):
        self.config = config
        self.init = init
        self.replicas = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
        self.cells = config.cells
        self.x = self.cells * config.dx
        C = self.cells.size
        R = self.replicas.size
        self.m = 0
        self.lo, self.hi = 0, C - 1
        self.acc = np.zeros((R, C), dtype=np.int64)
        self.acc_prev = np.zeros((R, C), dtype=np.int64)
        self.values = np.broadcast_to(self.init_row(0), (R, C)).copy()
        self.history = [] if keep_history else None

    def init_row(self, m):
        return np.asarray(initial_wave(m * self.config.dt, self.x, self.init, self.config.kernel),
                          dtype=float) * np.ones(self.x.size)

    @property
    def t(self):
        return self.m * self.config.dt

    def window(self):
        return slice(self.lo, self.hi + 1)

    def node_values(self, cells):
        idx = np.asarray(cells) - self.cells[0]
        if idx.min() < self.lo or idx.max() > self.hi:
            raise GuardBandError("requested nodes outside the valid window at step %d" % self.m)
        return self.values[:, idx]

    def _set_values(self, acc):
        w = self.window()
        vals = np.full(acc.shape, np.nan)
        vals[:, w] = self.init_row(self.m)[w] + acc[:, w] * ACC_UNIT
        self.values = vals


def strip_row(state, sigma, noise, start=None):
    """Quantized strip integrals of row m over the valid window, zero elsewhere."""
    w = state.window()
    inc = noise.row(state.m, state.cells[w])
    x0 = state.values[:, w] if start is None else start[:, w]
    _, I = evolve_cell(x0, sigma, inc)
    Iq = np.zeros(state.acc.shape, dtype=np.int64)
    Iq[:, w] = quantize(I)
    return Iq


def _check_step(state):
    if state.hi - state.lo < 2:
        raise GuardBandError("light cone reached the domain boundary at step %d" % state.m)


def wavefront_update(acc, acc_prev, Iq, lo, hi):
    """Cone sums of row m+1 on [lo+1, hi-1] from rows m, m-1 and strip row m."""
    new = np.zeros_like(acc)
    a, b = lo + 1, hi
    new[:, a:b] = (acc[:, a - 1:b - 1] + acc[:, a + 1:b + 1] - acc_prev[:, a:b]
                   + Iq[:, a - 1:b - 1] + 2 * Iq[:, a:b] + Iq[:, a + 1:b + 1])
    if np.abs(new).max(initial=0) > ACC_LIMIT:
        raise OverflowError("cone sum left the int64 headroom")
    return new


def step_incremental(state, init, sigma, noise):
    """Advance one row with the O(cells) wavefront recursion."""
    _check_step(state)
    Iq = strip_row(state, sigma, noise)
    if state.history is not None:
        state.history.append(Iq)
    new = wavefront_update(state.acc, state.acc_prev, Iq, state.lo, state.hi)
    state.acc_prev, state.acc = state.acc, new
    state.m += 1
    state.lo += 1
    state.hi -= 1
    state._set_values(new)
    return state


def reconstruct(history, m, lo, hi):
    """Cone sums of row m on index window [lo, hi] straight from the strip rows."""
    R, C = history[0].shape
    out = np.zeros((R, C), dtype=np.int64)
    k = np.arange(lo, hi + 1)
    for j in range(m):
        d = m - j
        P = np.zeros((R, C + 1), dtype=np.int64)
        np.cumsum(history[j], axis=1, out=P[:, 1:])
        inner = P[:, k + d] - P[:, k - d + 1]
        out[:, lo:hi + 1] += 2 * inner + history[j][:, k - d] + history[j][:, k + d]
    if np.abs(out).max(initial=0) > ACC_LIMIT:
        raise OverflowError("cone sum left the int64 headroom")
    return out


def step_direct(state, init, sigma, noise):
    """Advance one row by rebuilding every cone sum from the stored strip rows."""
    if state.history is None:
        raise ValueError("step_direct needs a state created with keep_history=True")
    _check_step(state)
    Iq = strip_row(state, sigma, noise)
    state.history.append(Iq)
    new = reconstruct(state.history, state.m + 1, state.lo + 1, state.hi - 1)
    state.acc_prev, state.acc = state.acc, new
    state.m += 1
    state.lo += 1
    state.hi -= 1
    state._set_values(new)
    return state


@dataclass
class Snapshots:
    """Field values at observation times: ``values[r, i, k]`` is replica r, time i, node k."""

    times: np.ndarray
    x: np.ndarray
    values: np.ndarray
    replicas: np.ndarray
    meta: dict = field(default_factory=dict)

    def at(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > _TOL:
            raise KeyError("no snapshot at t=%r" % t)
        return self.values[:, i, :]

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        first = parts[0]
        return cls(first.times, first.x, np.concatenate([p.values for p in parts]),
                   np.concatenate([p.replicas for p in parts]), dict(first.meta))

    def to_csv(self, path, picard_order=None):
        R, T, X = self.values.shape
        rep = np.repeat(self.replicas, T * X)
        tt = np.tile(np.repeat(self.times, X), R)
        xx = np.tile(self.x, R * T)
        cols = [rep.astype(str), np.char.mod("%.17g", tt), np.char.mod("%.17g", xx),
                np.char.mod("%.17g", self.values.ravel())]
        header = "replica,t,x,value"
        if picard_order is not None:
            cols.append(np.full(rep.shape, str(int(picard_order))))
            header += ",picard_order"
        with open(path, "w") as fh:
            fh.write(header + "\n")
            if rep.size:
                rows = cols[0]
                for c in cols[1:]:
                    rows = np.char.add(np.char.add(rows, ","), c)
                fh.write("\n".join(rows.tolist()) + "\n")
        with open(str(path) + ".json", "w") as fh:
            json.dump(self.meta, fh, sort_keys=True, indent=1)


def _make_noise(config, seed, replica):
    return NoiseGrid(seed=seed, replica=replica, n=config.n, kernel=config.kernel,
                     substeps=config.substeps, n_steps=config.n_steps,
                     cells=(int(config.cells[0]), int(config.cells[-1])))


def _meta(config, init, sigma, seed, **extra):
    meta = {"n": config.n, "kappa": config.kernel.kappa, "seed": seed,
            "substeps": config.substeps, "sigma": sigma_descriptor(sigma),
            "config_hash": config_hash(config, init, sigma)}
    meta.update(extra)
    return meta


def solve(config, init, sigma, seed, replica, noise=None, method="incremental"):
    """Run the scheme for one replica id or an array of them; returns Snapshots."""
    if noise is None:
        noise = _make_noise(config, seed, replica)
    else:
        replica = noise.replicas
    step = {"incremental": step_incremental, "direct": step_direct}[method]
    state = LatticeState(config, init, replica, keep_history=(method == "direct"))
    obs = config.obs_steps
    cells = config.obs_cells
    out = np.empty((state.replicas.size, len(obs), cells.size))
    for i, m in enumerate(obs):
        if m == 0:
            out[:, i] = state.node_values(cells)
    for m in range(1, max(obs) + 1):
        step(state, init, sigma, noise)
        for i, mo in enumerate(obs):
            if mo == m:
                out[:, i] = state.node_values(cells)
    return Snapshots(np.asarray(config.times), cells * config.dx, out, state.replicas,
                     _meta(config, init, sigma, seed))


def reference_solve(config, init, sigma, seed, replica, noise=None):
    """Independent cross-check: Euler for the mild form with the kernel sampled mid-cell.

    Cell (j, l) contributes 1/2 sigma(u_{j,l}) W(cell) to node (m, k) when
    |l - k| < m - j, which is where the mid-time Green function is non-zero.
    Plain floating point, no in-cell evolution.
    """
    if noise is None:
        noise = _make_noise(config, seed, replica)
    else:
        replica = noise.replicas
    replicas = np.atleast_1d(np.asarray(replica, dtype=np.int64))
    allcells = config.cells
    x = allcells * config.dx
    C = allcells.size
    R = replicas.size
    A = np.zeros((R, C))
    A_prev = np.zeros((R, C))
    J_prev = np.zeros((R, C))
    obs = config.obs_steps
    cells = config.obs_cells
    oidx = cells - allcells[0]
    out = np.empty((R, len(obs), cells.size))

    def field_at(m):
        return initial_wave(m * config.dt, x, init, config.kernel) + 0.5 * A

    lo, hi = 0, C - 1
    u = np.broadcast_to(field_at(0), (R, C))
    for m in range(0, max(obs) + 1):
        for i, mo in enumerate(obs):
            if mo == m:
                if oidx.min() < lo or oidx.max() > hi:
                    raise GuardBandError("requested nodes outside the valid window")
                out[:, i] = u[:, oidx]
        if m == max(obs):
            break
        if hi - lo < 2:
            raise GuardBandError("light cone reached the domain boundary at step %d" % m)
        J = np.zeros((R, C))
        inc = noise.row(m, allcells[lo:hi + 1]).sum(axis=-1)
        J[:, lo:hi + 1] = sigma(u[:, lo:hi + 1]) * inc
        new = np.zeros((R, C))
        a, b = lo + 1, hi
        new[:, a:b] = (A[:, a - 1:b - 1] + A[:, a + 1:b + 1] - A_prev[:, a:b]
                       + J[:, a:b] + J_prev[:, a:b])
        A_prev, A, J_prev = A, new, J
        lo, hi = lo + 1, hi - 1
        u = field_at(m + 1)
    return Snapshots(np.asarray(config.times), cells * config.dx, out, replicas,
                     _meta(config, init, sigma, seed, scheme="reference"))


# ---------------------------------------------------------------------------
# Exact lattice oracles
# ---------------------------------------------------------------------------

def lattice_gaussian_variance(t, n, kernel, eps0=1.0):
    """Exact node variance of the scheme for sigma = eps0: eps0^2 kappa t^2/4 (1 + 1/(2M))."""
    M = int(round(t * 2 ** n))
    if M == 0:
        return 0.0
    return eps0 * eps0 * kernel.kappa * t * t / 4.0 * (1.0 + 1.0 / (2 * M))


def lattice_anderson_second_moment(t, lam, n, kernel, substeps, u0=1.0):
    """Exact E X(m)^2 of the scheme for sigma(u) = lam*u, constant u0 and v0 = 0.

    Strip integrals of different cells are orthogonal, and the Euler map
    gives E[I^2 | x] = lam^2 g x^2 with g = sum_i (h/s)(1 + lam^2 h/(4s))^i,
    h = dt*dx. With c(d) = sum_a w(d,a)^2 = 2d - 1/2 this yields the renewal
    f(m) = u0^2 + lam^2 g sum_{j<m} c(m-j)/4 f(j).
    """
    M = int(round(t * 2 ** n))
    h = 2.0 ** (-2 * n) * kernel.kappa
    s = substeps
    g = sum((h / s) * (1.0 + lam * lam * h / (4.0 * s)) ** i for i in range(s))
    f = np.empty(M + 1)
    f[0] = u0 * u0
    c = 2.0 * np.arange(M + 1) - 0.5
    for m in range(1, M + 1):
        f[m] = u0 * u0 + lam * lam * g * 0.25 * np.dot(c[m:0:-1], f[:m])
    return float(f[M])


def lattice_increment_variance(r, t, n, kernel, eps0=1.0):
    """Exact Var(X_{k+r}(m) - X_k(m)) for sigma = eps0 (r in cells, t = m dt)."""
    M = int(round(t * 2 ** n))
    h = 2.0 ** (-2 * n) * kernel.kappa
    r = abs(int(r))
    total = 0.0
    for d in range(1, M + 1):
        a = np.arange(-d - r, d + r + 1)
        diff = gamma_weight(d, a) - gamma_weight(d, a - r)
        total += float(np.sum(diff * diff))
    return eps0 * eps0 * h / 4.0 * total

"""Picard iterates on the lattice, their dependence sets, and the gap bound.

u_0 = 0 and u_q uses strip integrals driven by u_{q-1}:
I^(q)_{j,l} is the Euler map of cell (j, l) started from u_{q-1}(j, l) on the
same increments the solver uses. All orders and the full field are advanced
together on one noise realization, so they are coupled exactly.
"""

import math
from typing import NamedTuple

import numpy as np

from .kernel import bound_curves
from .noise import Rectangle, agree_on
from .solver import (LatticeState, Snapshots, _check_step, _make_noise, _meta, evolve_cell,
                     quantize, wavefront_update)


class PicardIterate(NamedTuple):
    order: int
    field: Snapshots
    cone_radius: float


class DependenceRadius(NamedTuple):
    radius: float
    iid_spacing: float
    points: np.ndarray


def _advance(states, starts, sigma, inc):
    st0 = states[0]
    w = st0.window()
    Iqs = []
    for start in starts:
        _, I = evolve_cell(start[:, w], sigma, inc)
        Iq = np.zeros(st0.acc.shape, dtype=np.int64)
        Iq[:, w] = quantize(I)
        Iqs.append(Iq)
    for st, Iq in zip(states, Iqs):
        new = wavefront_update(st.acc, st.acc_prev, Iq, st.lo, st.hi)
        st.acc_prev, st.acc = st.acc, new
        st.m += 1
        st.lo += 1
        st.hi -= 1
        st._set_values(new)


def picard_sequence(orders, config, init, sigma, noise=None, seed=0, replica=0, with_solution=True):
    """Iterates for every order in ``orders`` (and the full field) on one noise realization.

    Returns ({q: Snapshots}, solution Snapshots or None).
    """
    if not init.is_constant:
        raise ValueError("Picard iterates are defined here for constant initial data only")
    orders = sorted(set(int(q) for q in orders))
    if orders and orders[0] < 0:
        raise ValueError("Picard order must be >= 0")
    if noise is None:
        noise = _make_noise(config, seed, replica)
    else:
        replica = noise.replicas
    qmax = max(orders) if orders else 0
    states = [LatticeState(config, init, replica) for _ in range(qmax)]
    sol = LatticeState(config, init, replica) if with_solution else None
    ref = sol if sol is not None else (states[0] if states else LatticeState(config, init, replica))
    zero = np.zeros_like(ref.values)

    obs = config.obs_steps
    cells = config.obs_cells
    R = ref.replicas.size
    out = {q: np.zeros((R, len(obs), cells.size)) for q in orders}
    sol_out = np.empty((R, len(obs), cells.size)) if sol is not None else None

    def record(m):
        for i, mo in enumerate(obs):
            if mo != m:
                continue
            for q in orders:
                if q > 0:
                    out[q][:, i] = states[q - 1].node_values(cells)
            if sol is not None:
                sol_out[:, i] = sol.node_values(cells)

    record(0)
    everything = states + ([sol] if sol is not None else [])
    for m in range(max(obs)):
        _check_step(ref)
        inc = noise.row(m, ref.cells[ref.window()])
        starts = [zero] + [st.values for st in states[:-1]]
        if sol is not None:
            starts.append(sol.values)
        if everything:
            _advance(everything, starts, sigma, inc)
        else:
            ref.m += 1
            ref.lo += 1
            ref.hi -= 1
        record(m + 1)

    x = cells * config.dx
    times = np.asarray(config.times)
    iters = {q: Snapshots(times, x, out[q], ref.replicas,
                          _meta(config, init, sigma, seed, picard_order=q)) for q in orders}
    solution = (Snapshots(times, x, sol_out, ref.replicas, _meta(config, init, sigma, seed))
                if sol is not None else None)
    return iters, solution


def picard_iterate(q, config, init, sigma, noise=None, seed=0, replica=0):
    """Order-q iterate; u_0 is identically 0."""
    iters, _ = picard_sequence([q], config, init, sigma, noise, seed, replica, with_solution=False)
    return PicardIterate(q, iters[q], dependence_radius(q, config.T, config.kernel).radius)


def dependence_radius(q, t, kernel, n_points=None, origin=0.0):
    """Cone radius q*kappa*t and the spacing 2*q*kappa*t beyond which iterates are independent.

    With ``n_points`` also returns that many points at exactly that spacing.
    """
    if q < 0:
        raise ValueError("q must be >= 0")
    if t <= 0:
        raise ValueError("t must be positive")
    r = q * kernel.kappa * t
    pts = origin + 2.0 * r * np.arange(n_points or 0)
    return DependenceRadius(r, 2.0 * r, pts)


def dependence_set(q, m, sigma_vanishes_at_zero=False):
    """Cells (j, offset) whose noise can influence u_q at a node of row m.

    Exact boolean propagation through the lattice recursion: cell (j, l)
    enters u_q(m, k) when |l - k| <= m - j, and brings along whatever
    u_{q-1}(j, l) depended on. Order-1 strip integrals vanish identically
    when sigma(0) = 0. Returns a boolean mask of shape (m, 2m + 1) indexed
    by (j, l - k + m).
    """
    if q < 0 or m < 0:
        raise ValueError("q and m must be >= 0")
    width = 2 * m + 1
    nbit = lambda j, a: j * width + (a + m)

    # node dependence as python-int bitsets, for every node of the target's cone
    prev = {}
    for order in range(1, q + 1):
        cur = {}
        for mm in range(m + 1):
            for a in range(-(m - mm), m - mm + 1):
                bits = 0
                for j in range(mm):
                    for off in range(-(mm - j), mm - j + 1):
                        l = a + off
                        if order == 1 and sigma_vanishes_at_zero:
                            continue
                        bits |= 1 << nbit(j, l)
                        bits |= prev.get((j, l), 0)
                cur[(mm, a)] = bits
        prev = cur
    bits = prev.get((m, 0), 0)
    mask = np.zeros((m, width), dtype=bool)
    for j in range(m):
        for a in range(-m, m + 1):
            if bits >> nbit(j, a) & 1:
                mask[j, a + m] = True
    return mask


def cone_region(q, config, target=0.0):
    """Rectangle of cells within q*kappa*T of the target, over all time rows."""
    k = int(round(target / config.dx))
    r = q * config.n_steps
    return Rectangle(config.n_steps, k - r, k + r)


def verify_cone(q, config, sigma, noise_a, noise_b, region, init, target=0.0):
    """Per-replica flags: is u_q(T, target) bit-identical under the two noises?

    The grids must agree on ``region``; that is checked before running.
    """
    if not agree_on(noise_a, noise_b, region):
        raise ValueError("noise grids do not agree on the requested region")
    cfg_cells = config.obs_cells
    k = int(round(target / config.dx))
    if k not in set(cfg_cells.tolist()):
        raise ValueError("target is not an observed node")
    idx = int(np.flatnonzero(cfg_cells == k)[0])
    if q == 0:
        return np.ones(noise_a.replicas.size, dtype=bool)
    a = picard_iterate(q, config, init, sigma, noise_a).field.values[:, -1, idx]
    b = picard_iterate(q, config, init, sigma, noise_b).field.values[:, -1, idx]
    return a.view(np.int64) == b.view(np.int64)


def picard_gap_bound(q, p, t, traits, kernel, C=1.0, T=None):
    """C^p exp(a p^{3/2} t) exp(-q p) with a = T Lip sqrt(kappa)."""
    if q < 1 or p < 2:
        raise ValueError("need q >= 1 and p >= 2")
    a = bound_curves(p, t, traits, kernel, T=T).picard_a
    return C ** p * math.exp(a * p ** 1.5 * t - q * p)


def fit_gap_constant(orders, gap_moments, p, t, traits, kernel, T=None):
    """Smallest C for which picard_gap_bound dominates every observed E|u_q - u|^p."""
    best = 0.0
    for q, g in zip(orders, gap_moments):
        base = picard_gap_bound(q, p, t, traits, kernel, C=1.0, T=T)
        best = max(best, (g / base) ** (1.0 / p))
    return best

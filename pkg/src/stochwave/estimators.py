"""Monte Carlo statistics for simulated fields.

Confidence intervals use batch means: replicas are split, in replica-id
order, into 20 contiguous batches and the batch averages get a Student-t
interval. Everything here is a pure reduction over arrays whose first axis
is the replica axis, so results depend only on replica order.
"""

import math
from typing import NamedTuple, Optional

import numpy as np
from scipy import optimize, stats

from .kernel import bound_curves, initial_wave, sigma_traits
from .solver import GuardBandError, solve

N_BATCHES = 20
MIN_REPLICAS = 100


def batch_means(samples, n_batches=N_BATCHES, level=0.95):
    """Mean over axis 0 and the batch-means CI half-width."""
    x = np.asarray(samples, dtype=float)
    R = x.shape[0]
    if R < n_batches:
        raise ValueError("need at least %d replicas for batch means, got %d" % (n_batches, R))
    edges = np.linspace(0, R, n_batches + 1).round().astype(int)
    b = np.stack([x[edges[i]:edges[i + 1]].mean(axis=0) for i in range(n_batches)])
    q = stats.t.ppf(0.5 + level / 2.0, n_batches - 1)
    half = q * b.std(axis=0, ddof=1) / math.sqrt(n_batches)
    return x.mean(axis=0), half


def batch_split(samples, n_batches=N_BATCHES):
    """Per-batch means, shape (n_batches, ...)."""
    x = np.asarray(samples, dtype=float)
    edges = np.linspace(0, x.shape[0], n_batches + 1).round().astype(int)
    return np.stack([x[edges[i]:edges[i + 1]].mean(axis=0) for i in range(n_batches)])


def tree_merge(parts, merge):
    """Fold ``parts`` pairwise, always in the same tree shape for a given count."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to merge")
    while len(parts) > 1:
        nxt = [merge(parts[i], parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


class PowerSums(NamedTuple):
    count: int
    sums: np.ndarray    # sums[p-1] = sum of x^p

    @classmethod
    def of(cls, x, pmax):
        x = np.asarray(x, dtype=float)
        return cls(x.shape[0], np.stack([np.sum(x ** p, axis=0) for p in range(1, pmax + 1)]))

    def merge(self, other):
        return PowerSums(self.count + other.count, self.sums + other.sums)

    def moment(self, p):
        return self.sums[p - 1] / self.count


class MomentEstimate(NamedTuple):
    p: int
    t: float
    estimate: float
    ci: float
    replicas: int
    x: Optional[float] = None


def _values_at(snapshots, t):
    return snapshots.at(t) if hasattr(snapshots, "at") else np.asarray(snapshots)


def estimate_moments(snapshots, ps, central=False, pooled=True, times=None):
    """Sample moments E|u|^p (or central E(u - Eu)^p) with batch-means CIs.

    Pooled estimates average over the reported nodes first (valid for
    x-stationary fields); otherwise one estimate per node.
    """
    R = snapshots.values.shape[0]
    if R < MIN_REPLICAS:
        raise ValueError("moment estimates need >= %d replicas, got %d" % (MIN_REPLICAS, R))
    out = []
    for t in (snapshots.times if times is None else times):
        u = snapshots.at(t)
        for p in ps:
            if central:
                dev = u - u.mean(axis=0)
                z = dev ** p
                corr = R / (R - 1.0) if p == 2 else 1.0
            else:
                z = np.abs(u) ** p
                corr = 1.0
            if pooled:
                m, h = batch_means(z.mean(axis=1))
                out.append(MomentEstimate(p, float(t), float(m) * corr, float(h) * corr, R))
            else:
                m, h = batch_means(z)
                for k, xk in enumerate(snapshots.x):
                    out.append(MomentEstimate(p, float(t), float(m[k]) * corr, float(h[k]) * corr,
                                              R, float(xk)))
    return out


# ---------------------------------------------------------------------------
# Lyapunov exponents
# ---------------------------------------------------------------------------

class LyapunovFit(NamedTuple):
    p: int
    rate: float
    ci: float
    window: tuple
    residual: float
    prefactor: np.ndarray
    upper_rate: float
    lower_rate: float
    upper_violation: bool
    lower_violation: bool


def _fit_rate(t, m, degree):
    """Rate gamma of m(t) ~ exp(gamma t) P(t), P a polynomial with non-negative coefficients."""
    if degree == 0:
        slope, icept = np.polyfit(t, np.log(m), 1)
        res = float(np.sqrt(np.mean((np.log(m) - (slope * t + icept)) ** 2)))
        return float(slope), np.array([math.exp(icept)]), res
    basis = np.stack([t ** i for i in range(degree + 1)], axis=1)

    def profile(g):
        A = np.exp(g * t)[:, None] * basis / m[:, None]
        c, r = optimize.nnls(A, np.ones_like(t))
        return r, c

    grid = np.linspace(-3.0, 3.0, 601)
    r = np.array([profile(g)[0] for g in grid])
    i = int(np.argmin(r))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    best = optimize.minimize_scalar(lambda g: profile(g)[0], bounds=(lo, hi), method="bounded",
                                    options={"xatol": 1e-10})
    g = float(best.x) if best.fun <= r[i] else float(grid[i])
    res, c = profile(g)
    return g, c, float(res / math.sqrt(t.size))


def lyapunov_fit(ts, moments, p, batch_moments=None, prefactor_degree=0, traits=None,
                 kernel=None, min_span=4.0, level=0.95):
    """Growth rate of the moment curve ``moments`` over ``ts``.

    prefactor_degree = 0 is the plain least-squares slope of log m(t).
    A positive degree fits m(t) = exp(gamma t) P(t) with P >= 0 of that
    degree, which separates polynomial growth from exponential growth.
    ``batch_moments`` (n_batches, len(ts)) gives the CI through the spread
    of per-batch rates. With ``traits`` and ``kernel`` the rate is checked
    against the Lipschitz upper bound and, for p = 2, the L_sigma lower bound.
    """
    t = np.asarray(ts, dtype=float)
    m = np.asarray(moments, dtype=float)
    if t.size < 2 or t.size != m.size:
        raise ValueError("need matching t and moment arrays with >= 2 points")
    if t.min() <= 0 or t.max() / t.min() < min_span - 1e-12:
        raise ValueError("t grid must span a factor of %g" % min_span)
    bad = [(float(ti), float(mi)) for ti, mi in zip(t, m) if not mi > 0]
    if bad:
        raise ValueError("non-positive moment estimates at %r" % bad)
    rate, coef, res = _fit_rate(t, m, prefactor_degree)
    ci = float("nan")
    if batch_moments is not None:
        bm = np.asarray(batch_moments, dtype=float)
        if np.all(bm > 0):
            rates = np.array([_fit_rate(t, row, prefactor_degree)[0] for row in bm])
            q = stats.t.ppf(0.5 + level / 2.0, rates.size - 1)
            ci = float(q * rates.std(ddof=1) / math.sqrt(rates.size))
        else:
            ci = float("inf")
    upper = lower = float("nan")
    up_bad = lo_bad = False
    if traits is not None and kernel is not None:
        bc = bound_curves(p, float(t.max()), traits, kernel)
        upper = bc.lyap_upper_rate
        lower = bc.lyap_lower_rate if p == 2 else float("nan")
        slack = 0.0 if math.isnan(ci) else ci
        up_bad = rate > upper + slack
        lo_bad = (p == 2 and traits.ell > 0 and rate < lower - slack)
    return LyapunovFit(p, rate, ci, (float(t.min()), float(t.max())), res, coef, upper, lower,
                       bool(up_bad), bool(lo_bad))


class WeightedNorm(NamedTuple):
    norm: float          # (sup_t e^{-beta t} E|u|^p)^{1/p}
    norm_p: float        # sup_t e^{-beta t} E|u|^p
    N: float             # (sup_t e^{-beta t} ||u||_p^2)^{1/2}
    N_via_relation: float


def weighted_norm(ts, moments, p, beta):
    """Discrete weighted norms over the t grid; ``moments`` is sup_x E|u|^p per time (or per (t, x))."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    t = np.asarray(ts, dtype=float)
    m = np.asarray(moments, dtype=float)
    if m.ndim > 1:
        m = m.max(axis=tuple(range(1, m.ndim)))
    norm_p = float(np.max(np.exp(-beta * t) * m))
    N = float(math.sqrt(np.max(np.exp(-beta * t) * m ** (2.0 / p))))
    via = float(np.max(np.exp(-(p * beta / 2.0) * t) * m) ** (1.0 / p))
    return WeightedNorm(norm_p ** (1.0 / p), norm_p, N, via)


# ---------------------------------------------------------------------------
# Tails
# ---------------------------------------------------------------------------

class TailCurve(NamedTuple):
    lambdas: np.ndarray
    log_survival: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    replicas: int
    empty: np.ndarray
    fit_variable: str
    slope: float
    intercept: float
    r2: float


def wilson_interval(k, n, level=0.95):
    z = stats.norm.ppf(0.5 + level / 2.0)
    k = np.asarray(k, dtype=float)
    p = k / n
    den = 1 + z * z / n
    c = (p + z * z / (2 * n)) / den
    h = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = np.where(k == 0, 0.0, np.clip(c - h, 0, 1))
    hi = np.where(k == n, 1.0, np.clip(c + h, 0, 1))
    return lo, hi


def top_decile_grid(samples, n_points=25, min_count=10):
    """lambda grid from the 90% quantile of |u| up to where ``min_count`` exceedances remain."""
    a = np.sort(np.abs(np.asarray(samples, dtype=float).ravel()))
    lo = a[int(0.9 * a.size)]
    hi = a[max(a.size - min_count, 0)]
    return np.linspace(lo, hi, n_points)


def tail_curve(samples, lambdas, fit="gaussian", gamma=None, absolute=True, level=0.95):
    """Empirical log P{|u| > lambda} with Wilson bands and a linear fit.

    fit="gaussian" regresses log P on lambda^2; fit="log" on lambda^(1/gamma).
    Grid points with no exceedance are marked empty and left out of the fit.
    """
    u = np.asarray(samples, dtype=float).ravel()
    if absolute:
        u = np.abs(u)
    lam = np.asarray(lambdas, dtype=float)
    n = u.size
    srt = np.sort(u)
    k = n - np.searchsorted(srt, lam, side="right")
    lo, hi = wilson_interval(k, n, level)
    empty = k == 0
    with np.errstate(divide="ignore"):
        logs = np.where(empty, np.nan, np.log(np.maximum(k, 1) / n))
        clo = np.where(lo > 0, np.log(np.maximum(lo, 1e-300)), -np.inf)
        chi = np.log(np.maximum(hi, 1e-300))
    if fit == "gaussian":
        xv, name = lam ** 2, "lambda^2"
    elif fit == "log":
        if gamma is None or not 0 < gamma:
            raise ValueError("fit='log' needs gamma > 0")
        xv, name = lam ** (1.0 / gamma), "lambda^(1/gamma)"
    else:
        raise ValueError("fit must be 'gaussian' or 'log'")
    ok = ~empty
    slope = icept = r2 = float("nan")
    if ok.sum() >= 3:
        res = stats.linregress(xv[ok], logs[ok])
        slope, icept, r2 = float(res.slope), float(res.intercept), float(res.rvalue ** 2)
    return TailCurve(lam, logs, clo, chi, n, empty, name, slope, icept, r2)


def paley_zygmund_check(samples, slack=None):
    """P{|u| >= sqrt(m2)/2} against m2^2/(4 m4) for the sample moments m2, m4."""
    u = np.asarray(samples, dtype=float).ravel()
    m2 = float(np.mean(u * u))
    m4 = float(np.mean(u ** 4))
    lam = 0.5 * math.sqrt(m2)
    lhs = float(np.mean(np.abs(u) >= lam))
    rhs = m2 * m2 / (4.0 * m4) if m4 > 0 else 0.0
    if slack is None:
        slack = 4.0 / math.sqrt(u.size)
    return lhs, rhs, lhs >= rhs - slack


def moment_envelope_check(samples, t, traits, kernel, v0=0.0, ps=(1, 2, 3), slack=4.0):
    """E|u|^{2p} against sqrt(2) (mu_t p)^p and 2 sqrt(2) (mu~_t p)^p, both with a slack factor."""
    u = np.asarray(samples, dtype=float).ravel()
    bc = bound_curves(2, t, traits, kernel, v0)
    rows = []
    for p in ps:
        m = float(np.mean(np.abs(u) ** (2 * p)))
        lower = math.sqrt(2.0) * (bc.mu_t * p) ** p
        upper = 2.0 * math.sqrt(2.0) * (bc.mu_tilde_t * p) ** p
        rows.append((p, m, lower, upper, lower / slack <= m <= upper * slack))
    return rows


# ---------------------------------------------------------------------------
# Supremum growth
# ---------------------------------------------------------------------------

class SupGrowthCurve(NamedTuple):
    R: np.ndarray
    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    exponent: float
    intercept: float
    replicas: int


def replica_sups(values, x, R_grid):
    """Per-replica sup of ``values`` (replicas, nodes) over |x| <= R, for every R."""
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    R_grid = np.asarray(R_grid, dtype=float)
    if R_grid.max() > np.abs(x).max() + 1e-12 or x.min() > -R_grid.max() + 1e-12:
        raise GuardBandError("R grid exceeds the simulated window")
    out = np.empty((values.shape[0], R_grid.size))
    for i, R in enumerate(R_grid):
        sel = np.abs(x) <= R + 1e-12
        out[:, i] = values[:, sel].max(axis=1)
    return out


def sup_growth_curve(sups, R_grid):
    """Median and quartiles of sups (replicas, len(R_grid)); exponent of log median vs log log R."""
    R_grid = np.asarray(R_grid, dtype=float)
    med = np.median(sups, axis=0)
    q25, q75 = np.quantile(sups, [0.25, 0.75], axis=0)
    e = c = float("nan")
    if np.all(med > 0) and np.all(R_grid > math.e):
        e, c = np.polyfit(np.log(np.log(R_grid)), np.log(med), 1)
    return SupGrowthCurve(R_grid, med, q25, q75, float(e), float(c), sups.shape[0])


def sup_growth(snapshots, t, R_grid):
    if min(R_grid) <= 0 or max(R_grid) / min(R_grid) < 100:
        raise ValueError("R grid should span at least two decades")
    return sup_growth_curve(replica_sups(snapshots.at(t), snapshots.x, R_grid), R_grid)


# ---------------------------------------------------------------------------
# Spatial increments
# ---------------------------------------------------------------------------

class HolderCurve(NamedTuple):
    h: np.ndarray
    value: np.ndarray
    ci: np.ndarray
    ratio: float


def increment_samples(values, x, h):
    """Per-replica average of (u(x+h) - u(x))^2 over all node pairs at distance h."""
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    r = h / dx
    if h < dx - 1e-12:
        raise ValueError("h below the cell width")
    if abs(r - round(r)) > 1e-9:
        raise ValueError("h must be a multiple of the cell width")
    r = int(round(r))
    if r >= x.size:
        raise ValueError("h wider than the window")
    d = values[:, r:] - values[:, :-r]
    return np.mean(d * d, axis=1)


def holder_modulus(snapshots, t, h_grid):
    """E|u(t,x+h) - u(t,x)|^2 / h, averaged over x, with batch-means CIs."""
    u = snapshots.at(t)
    vals, cis = [], []
    for h in h_grid:
        m, c = batch_means(increment_samples(u, snapshots.x, h))
        vals.append(m / h)
        cis.append(c / h)
    vals = np.array(vals)
    ratio = float(vals.max() / vals.min()) if vals.min() > 0 else float("inf")
    return HolderCurve(np.asarray(h_grid, dtype=float), vals, np.array(cis), ratio)


# ---------------------------------------------------------------------------
# Comparison and diagnostics
# ---------------------------------------------------------------------------

class ComparisonReport(NamedTuple):
    violations: int
    nodes: int
    fraction: float
    max_violation: float
    relative_max: float
    quantiles: np.ndarray     # 50/90/99% of violation magnitudes
    scale: float
    identical: bool


def _ordered(init1, init2, config):
    x = config.cells * config.dx
    K = max(config.L, 1.0)
    probe = np.concatenate([x, np.linspace(-K, K, 2001)])
    return (np.all(init1.u0(probe) >= init2.u0(probe)) and np.all(init1.v0(probe) >= init2.v0(probe)))


def comparison_report(f1, f2):
    d = np.asarray(f1) - np.asarray(f2)
    viol = d < 0
    mags = -d[viol]
    scale = float(np.sqrt(np.mean(np.asarray(f2) ** 2)))
    mx = float(mags.max()) if mags.size else 0.0
    q = np.quantile(mags, [0.5, 0.9, 0.99]) if mags.size else np.zeros(3)
    return ComparisonReport(int(viol.sum()), int(d.size), float(viol.mean()), mx,
                            mx / scale if scale > 0 else float("inf"), q, scale,
                            bool(np.array_equal(f1, f2)))


def compare_coupled(init1, init2, sigma, config, seed, replicas):
    """Run both initial data on identical noise and report nodes where field1 < field2."""
    if not _ordered(init1, init2, config):
        raise ValueError("initial data not ordered: need u0_1 >= u0_2 and v0_1 >= v0_2")
    a = solve(config, init1, sigma, seed, replicas)
    b = solve(config, init2, sigma, seed, replicas)
    return comparison_report(a.values, b.values)


def mean_z_scores(snapshots, init, kernel):
    """(mean - initial_wave) / standard error, per (time, node)."""
    v = snapshots.values
    R = v.shape[0]
    exact = initial_wave(snapshots.times[:, None], snapshots.x[None, :], init, kernel)
    diff = v.mean(axis=0) - exact
    se = v.std(axis=0, ddof=1) / math.sqrt(R)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0),
                     np.where(np.abs(diff) <= 1e-12, 0.0, np.inf))
    return z


def support_violations(snapshots, init, kernel):
    """Count of non-zero nodes outside [-K - kappa t, K + kappa t]."""
    K = init.support
    if K is None:
        raise ValueError("initial data are not compactly supported")
    bad = 0
    for i, t in enumerate(snapshots.times):
        outside = np.abs(snapshots.x) > K + kernel.kappa * t + 1e-12
        bad += int(np.count_nonzero(snapshots.values[:, i, outside]))
    return bad


def field_diagnostics(snapshots, init, config, sigma=None, z_level=4.0, frac=0.99, slack=0.25):
    """Exact support check, mean identity z-tests and the L^2(R) growth rate.

    The L^2 rate is fitted when there are at least two positive times and
    compares against [L_sigma sqrt(kappa/2) - slack, 2^{3/2} Lip sqrt(kappa/2) + slack].
    """
    kernel = config.kernel
    out = {}
    if init.support is not None and sigma is not None and sigma.vanishes_at_zero:
        out["support_violations"] = support_violations(snapshots, init, kernel)
        out["compact_support_ok"] = out["support_violations"] == 0
    else:
        out["compact_support_ok"] = None
    z = mean_z_scores(snapshots, init, kernel)
    out["mean_z_max"] = float(np.max(np.abs(z)))
    out["mean_identity_fraction"] = float(np.mean(np.abs(z) <= z_level))
    out["mean_identity_ok"] = out["mean_identity_fraction"] >= frac
    out["l2_growth_fit"] = None
    ts = snapshots.times
    if sigma is not None and init.support is not None and np.sum(ts > 0) >= 2:
        dx = snapshots.x[1] - snapshots.x[0]
        norms = (snapshots.values ** 2).sum(axis=2) * dx
        pos = ts > 0
        m = norms[:, pos].mean(axis=0)
        tr = sigma_traits(sigma)
        rate = float(np.polyfit(ts[pos], np.log(m), 1)[0])
        lo = tr.ell * math.sqrt(kernel.kappa / 2.0) - slack
        hi = 2 ** 1.5 * tr.lip * math.sqrt(kernel.kappa / 2.0) + slack
        out["l2_growth_fit"] = {"rate": rate, "window": [lo, hi], "ok": bool(lo <= rate <= hi)}
    return out

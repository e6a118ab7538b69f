"""Declarative experiment runner.

An experiment is a JSON config. Replicas are processed in blocks of 256
consecutive ids; each block reduces to per-replica arrays that are saved as
a checkpoint, and the final statistics are computed from the blocks in id
order. The block boundaries do not depend on the worker count, so outputs
are byte-identical for any number of workers and across resumed runs.
"""

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .estimators import (batch_means, batch_split, comparison_report, field_diagnostics,
                         increment_samples, lyapunov_fit, mean_z_scores, replica_sups,
                         sup_growth_curve, tail_curve, top_decile_grid)
from .kernel import (InitialData, SigmaSpec, WaveKernel, anderson_second_moment_oracle,
                     bounded_sigma_moment_envelope, initial_wave, sigma_traits)
from .noise import NoiseGrid, SplicedNoise, Rectangle
from .picard import (cone_region, dependence_set, fit_gap_constant, picard_iterate,
                     picard_sequence, verify_cone)
from .solver import (SchemeConfig, lattice_anderson_second_moment, lattice_gaussian_variance,
                     lattice_increment_variance, solve)

BLOCK = 256
KINDS = ("simulate", "moments", "lyapunov", "tails", "supremum", "compare", "localize",
         "diagnostics")
ENV_OUT = "STOCHWAVE_OUT"


class ConfigError(ValueError):
    pass


def default_out_root():
    return os.environ.get(ENV_OUT, "stochwave_out")


@dataclass
class ExperimentConfig:
    kind: str
    n: int
    T: float
    L: float
    replicas: int
    seed: int = 0
    kappa: float = 1.0
    substeps: int = 4
    obs_times: list = None
    obs_radius: float = None
    init: dict = field(default_factory=lambda: InitialData.constant().to_dict())
    sigma: dict = field(default_factory=lambda: {"kind": "constant", "eps0": 1.0})
    params: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError("unknown experiment kind %r" % self.kind)
        if int(self.replicas) < 1:
            raise ConfigError("replicas must be >= 1")
        try:
            self.scheme()
            self.initial_data()
            self.sigma_spec()
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def scheme(self, **over):
        d = dict(n=self.n, T=self.T, L=self.L, substeps=self.substeps,
                 kernel=WaveKernel(self.kappa),
                 obs_times=tuple(self.obs_times) if self.obs_times is not None else None,
                 obs_radius=self.obs_radius)
        d.update(over)
        return SchemeConfig(**d)

    def initial_data(self):
        return InitialData.from_dict(self.init)

    def sigma_spec(self):
        return SigmaSpec.from_dict(self.sigma)

    @property
    def kernel(self):
        return WaveKernel(self.kappa)

    def to_dict(self):
        return asdict(self)

    def canonical(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError("unknown config fields: %s" % ", ".join(sorted(extra)))
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# per-block work
# ---------------------------------------------------------------------------

def _node_index(cells, dx, xs):
    ks = np.rint(np.asarray(xs, dtype=float) / dx).astype(np.int64)
    idx = np.searchsorted(cells, ks)
    if np.any(idx >= cells.size) or np.any(cells[np.minimum(idx, cells.size - 1)] != ks):
        raise ConfigError("requested points are not observed lattice nodes")
    return idx


def _block_fields(cfg, ids):
    snap = solve(cfg.scheme(), cfg.initial_data(), cfg.sigma_spec(), cfg.seed, ids)
    return {"values": snap.values}


def _block_tails(cfg, ids):
    snap = solve(cfg.scheme(), cfg.initial_data(), cfg.sigma_spec(), cfg.seed, ids)
    return {"values": snap.values[:, -1, :]}


def _block_supremum(cfg, ids):
    grid = np.asarray(cfg.params["R_grid"], dtype=float)
    t = cfg.scheme().times[-1]
    snap = solve(cfg.scheme(), cfg.initial_data(), cfg.sigma_spec(), cfg.seed, ids)
    out = {"sups": replica_sups(snap.at(t), snap.x, grid)}
    trend = cfg.params.get("trend_sigma")
    if trend:
        snap = solve(cfg.scheme(), cfg.initial_data(), SigmaSpec.from_dict(trend), cfg.seed, ids)
        out["trend_sups"] = replica_sups(snap.at(t), snap.x, grid)
    return out


def _block_compare(cfg, ids):
    init2 = InitialData.from_dict(cfg.params["init2"])
    out = {}
    for s in cfg.params.get("substeps_list", [cfg.substeps]):
        sc = cfg.scheme(substeps=int(s))
        a = solve(sc, cfg.initial_data(), cfg.sigma_spec(), cfg.seed, ids).values
        b = solve(sc, init2, cfg.sigma_spec(), cfg.seed, ids).values
        R = a.shape[0]
        d = (a - b).reshape(R, -1)
        viol = d < 0
        out["count_%d" % s] = viol.sum(axis=1).astype(float)
        out["max_%d" % s] = np.where(viol, -d, 0.0).max(axis=1)
        out["sq_%d" % s] = (b.reshape(R, -1) ** 2).sum(axis=1)
        out["same_%d" % s] = np.all(a == b, axis=(1, 2)).astype(float)
        out["nodes_%d" % s] = np.full(R, float(d.shape[1]))
    return out


def _block_localize(cfg, ids):
    sc = cfg.scheme()
    init = cfg.initial_data()
    sig = cfg.sigma_spec()
    if cfg.params.get("mode", "iid") == "gaps":
        orders = list(cfg.params["orders"])
        iters, sol = picard_sequence(orders, sc, init, sig, seed=cfg.seed, replica=ids)
        return {"sq_%d" % q: ((iters[q].values - sol.values) ** 2)[:, -1, :].mean(axis=1)
                for q in orders}
    q = int(cfg.params["q"])
    it = picard_iterate(q, sc, init, sig, seed=cfg.seed, replica=ids)
    idx = _node_index(sc.obs_cells, sc.dx, cfg.params["points"])
    return {"values": it.field.values[:, -1, idx]}


def _block_holder(cfg, ids):
    snap = solve(cfg.scheme(), cfg.initial_data(), cfg.sigma_spec(), cfg.seed, ids)
    u = snap.values[:, -1, :]
    return {"inc_%d" % i: increment_samples(u, snap.x, h)
            for i, h in enumerate(cfg.params["h_grid"])}


def block_job(cfg, ids):
    k = cfg.kind
    if k == "tails":
        return _block_tails(cfg, ids)
    if k == "supremum":
        return _block_supremum(cfg, ids)
    if k == "compare":
        return _block_compare(cfg, ids)
    if k == "localize":
        return _block_localize(cfg, ids)
    if k == "diagnostics" and "h_grid" in cfg.params:
        return _block_holder(cfg, ids)
    return _block_fields(cfg, ids)


def _run_block(args):
    cfg_dict, b, path = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    lo = b * BLOCK
    ids = np.arange(lo, min(lo + BLOCK, cfg.replicas), dtype=np.int64)
    data = block_job(cfg, ids)
    tmp = path + ".tmp.npz"
    np.savez(tmp, **data)
    os.replace(tmp, path)
    return b


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def _check(name, ok, statistic, threshold, cfg):
    return {"test_name": name, "pass": bool(ok), "statistic": _num(statistic),
            "threshold": _num(threshold), "seed": cfg.seed, "config_hash": cfg.hash()}


def _num(x):
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_num(v) for v in np.asarray(x, dtype=float).tolist()]
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else repr(x)


class _Fields:
    def __init__(self, values, times, x):
        self.values, self.times, self.x = values, np.asarray(times, dtype=float), x


def _mean_identity_checks(cfg, values, times, x):
    z = mean_z_scores(_Fields(values, times, x), cfg.initial_data(), cfg.kernel)
    frac = float(np.mean(np.abs(z) <= 4.0))
    return [_check("mean_identity_z4_fraction", frac >= 0.99, frac, 0.99, cfg)]


def _agg_simulate(cfg, data):
    sc = cfg.scheme()
    v = data["values"]
    x = sc.obs_cells * sc.dx
    rows = []
    for r in range(v.shape[0]):
        for i, t in enumerate(sc.times):
            for k in range(x.size):
                rows.append((r, t, x[k], v[r, i, k]))
    return ["replica", "t", "x", "value"], rows, []


def _agg_moments(cfg, data):
    sc = cfg.scheme()
    v = data["values"]
    R = v.shape[0]
    x = sc.obs_cells * sc.dx
    P = cfg.params
    oracle = P.get("oracle", "none")
    sig = cfg.sigma_spec()
    rows, checks = [], []
    for i, t in enumerate(sc.times):
        u = v[:, i, :]
        dev = u - u.mean(axis=0)
        var, var_ci = batch_means((dev ** 2).mean(axis=1))
        var, var_ci = var * R / (R - 1.0), var_ci * R / (R - 1.0)
        m4, m4_ci = batch_means((dev ** 4).mean(axis=1))
        m2, m2_ci = batch_means((u ** 2).mean(axis=1))
        exact_var = exact_m2 = float("nan")
        if oracle == "gaussian":
            eps0 = sig.params["eps0"]
            exact_var = lattice_gaussian_variance(t, sc.n, sc.kernel, eps0)
            checks.append(_check("variance_t=%g" % t, abs(var - exact_var) <= var_ci,
                                 var, [exact_var - var_ci, exact_var + var_ci], cfg))
            target4 = 3.0 * exact_var ** 2
            checks.append(_check("fourth_central_t=%g" % t, abs(m4 - target4) <= m4_ci,
                                 m4, [target4 - m4_ci, target4 + m4_ci], cfg))
        elif oracle == "anderson":
            lam = sig.params["lam"]
            u0 = cfg.initial_data().u0.c
            cont = u0 * u0 * anderson_second_moment_oracle(t, lam, sc.kernel)
            levels = P.get("trend_levels", [sc.n])
            bias = [lattice_anderson_second_moment(t, lam, lv, sc.kernel, sc.substeps, u0) / cont - 1.0
                    for lv in levels]
            exact_m2 = cont * (1.0 + bias[levels.index(sc.n)] if sc.n in levels else 1.0)
            tol = P.get("rel_tol", 0.05)
            checks.append(_check("second_moment_t=%g" % t, abs(m2 - exact_m2) <= tol * exact_m2,
                                 m2, [exact_m2 * (1 - tol), exact_m2 * (1 + tol)], cfg))
            dec = all(abs(bias[j + 1]) < abs(bias[j]) for j in range(len(bias) - 1))
            checks.append(_check("lattice_bias_decreasing_in_n", dec, bias, 0.0, cfg))
        rows.append((t, var, var_ci, m4, m4_ci, m2, m2_ci, exact_var, exact_m2))
    checks += _mean_identity_checks(cfg, v, sc.times, x)
    header = ["t", "variance", "variance_ci", "m4_central", "m4_central_ci", "m2", "m2_ci",
              "lattice_variance", "lattice_m2"]
    return header, rows, checks


def _agg_lyapunov(cfg, data):
    sc = cfg.scheme()
    u2 = (data["values"] ** 2).mean(axis=2)
    ts = np.asarray(sc.times)
    m, ci = batch_means(u2)
    bm = batch_split(u2)
    P = cfg.params
    sig = cfg.sigma_spec()
    tr = sigma_traits(sig)
    fit = lyapunov_fit(ts, m, 2, bm, prefactor_degree=P.get("degree", 0), traits=tr,
                       kernel=cfg.kernel, min_span=P.get("min_span", 4.0))
    checks = [_check("rate_below_lipschitz_bound", not fit.upper_violation, fit.rate,
                     fit.upper_rate + fit.ci, cfg)]
    if "rate_range" in P:
        lo, hi = P["rate_range"]
        checks.append(_check("rate_in_range", lo <= fit.rate <= hi, fit.rate, [lo, hi], cfg))
    if P.get("zero_in_ci"):
        checks.append(_check("rate_ci_contains_zero", abs(fit.rate) <= fit.ci, fit.rate,
                             [-fit.ci, fit.ci], cfg))
    if P.get("envelope"):
        init = cfg.initial_data()
        env = np.array([bounded_sigma_moment_envelope(2, t, init.u0_sup, init.v0_sup, tr.s0,
                                                      cfg.kernel) for t in ts])
        checks.append(_check("below_quadratic_envelope", bool(np.all(m <= env)),
                             float(np.max(m / env)), 1.0, cfg))
    checks += _mean_identity_checks(cfg, data["values"], ts, sc.obs_cells * sc.dx)
    rows = [(t, mi, ci_i) for t, mi, ci_i in zip(ts, m, ci)]
    rows.append(("rate", fit.rate, fit.ci))
    return ["t", "second_moment", "ci"], rows, checks


def _agg_tails(cfg, data):
    sc = cfg.scheme()
    u = data["values"].ravel()
    P = cfg.params
    lam = top_decile_grid(u, P.get("n_points", 25), P.get("min_count", 10))
    tc = tail_curve(u, lam, fit=P.get("fit", "gaussian"), gamma=P.get("gamma"))
    thr = P.get("r2_min", 0.9)
    checks = [_check("tail_fit_r2", tc.r2 > thr, tc.r2, thr, cfg),
              _check("survival_non_increasing",
                     bool(np.all(np.diff(tc.log_survival[~tc.empty]) <= 0)), 0, 0, cfg)]
    checks += _mean_identity_checks(cfg, data["values"][:, None, :], sc.times[-1:],
                                    sc.obs_cells * sc.dx)
    rows = list(zip(tc.lambdas, tc.log_survival, tc.ci_lo, tc.ci_hi))
    return ["lambda", "log_survival", "ci_lo", "ci_hi"], rows, checks


def _agg_supremum(cfg, data):
    grid = np.asarray(cfg.params["R_grid"], dtype=float)
    c = sup_growth_curve(data["sups"], grid)
    lo, hi = cfg.params.get("exponent_range", [0.3, 0.7])
    checks = [_check("sup_exponent_in_range", lo <= c.exponent <= hi, c.exponent, [lo, hi], cfg),
              _check("medians_strictly_increasing", bool(np.all(np.diff(c.median) > 0)),
                     float(np.min(np.diff(c.median))), 0.0, cfg)]
    rows = list(zip(grid, c.median, c.q25, c.q75))
    if "trend_sups" in data:
        ct = sup_growth_curve(data["trend_sups"], grid)
        checks.append(_check("unbounded_sigma_median_grows", ct.median[-1] > ct.median[0],
                             ct.median[-1] - ct.median[0], 0.0, cfg))
        rows += [("trend:%g" % r, m, a, b) for r, m, a, b in zip(grid, ct.median, ct.q25, ct.q75)]
    return ["R", "median_sup", "q25", "q75"], rows, checks


def _agg_compare(cfg, data):
    rows, fr, mx = [], [], []
    subs = cfg.params.get("substeps_list", [cfg.substeps])
    for s in subs:
        nodes = data["nodes_%d" % s].sum()
        frac = data["count_%d" % s].sum() / nodes
        scale = math.sqrt(data["sq_%d" % s].sum() / nodes)
        rel = data["max_%d" % s].max() / scale
        rows.append((s, data["count_%d" % s].sum(), nodes, frac, data["max_%d" % s].max(), rel))
        fr.append(frac)
        mx.append(rel)
    checks = [_check("violation_fraction_below_1pct", fr[0] < 0.01, fr[0], 0.01, cfg),
              _check("violation_magnitude_below_1e-3_scale", mx[0] < 1e-3, mx[0], 1e-3, cfg)]
    if len(subs) > 1:
        # a quantity already at zero counts as decreasing
        down = lambda v: all(v[i + 1] < v[i] or v[i] == v[i + 1] == 0 for i in range(len(v) - 1))
        checks.append(_check("violation_fraction_decreases_with_substeps", down(fr), fr, 0, cfg))
        checks.append(_check("violation_magnitude_decreases_with_substeps", down(mx), mx, 0, cfg))
    return ["substeps", "violations", "nodes", "fraction", "max_violation", "relative_max"], rows, checks


def _agg_localize(cfg, data):
    sc = cfg.scheme()
    P = cfg.params
    if P.get("mode", "iid") == "gaps":
        orders = list(P["orders"])
        gaps = np.array([math.sqrt(data["sq_%d" % q].mean()) for q in orders])
        d = np.diff(np.log(gaps))
        checks = [_check("gaps_strictly_decreasing", bool(np.all(d < 0)), float(np.max(d)), 0, cfg),
                  _check("mean_log_gap_step", float(np.mean(d)) <= -1.5, float(np.mean(d)), -1.5, cfg)]
        C = fit_gap_constant(orders, gaps ** 2, 2, sc.T, sigma_traits(cfg.sigma_spec()), cfg.kernel)
        rows = [(q, g) for q, g in zip(orders, gaps)] + [("fitted_C", C)]
        return ["order", "l2_gap"], rows, checks
    q = int(P["q"])
    u = data["values"]
    R = u.shape[0]
    rho = np.corrcoef(u, rowvar=False)
    iu = np.triu_indices(rho.shape[0], 1)
    thr = 4.0 / math.sqrt(R)
    checks = [_check("max_abs_correlation", float(np.max(np.abs(rho[iu]))) <= thr,
                     float(np.max(np.abs(rho[iu]))), thr, cfg)]
    # structural: exact lattice dependence sets of the points are pairwise disjoint
    M = sc.n_steps
    ks = np.rint(np.asarray(P["points"]) / sc.dx).astype(int)
    mask = dependence_set(min(q, M + 1), M, cfg.sigma_spec().vanishes_at_zero)
    cellsets = []
    for k in ks:
        j, a = np.nonzero(mask)
        cellsets.append(set(zip(j.tolist(), (a - M + k).tolist())))
    disjoint = all(not (cellsets[i] & cellsets[j]) for i in range(len(ks)) for j in range(i + 1, len(ks)))
    checks.append(_check("dependence_sets_disjoint", disjoint, 0, 0, cfg))
    # spliced-noise probes on the radius q*kappa*T cone of the first point
    n_probe = int(P.get("probes", 100))
    ids = np.arange(n_probe)
    pc = sc.__class__(n=sc.n, T=sc.T, L=(2 * q + 1) * sc.kernel.kappa * sc.T, substeps=sc.substeps,
                      kernel=sc.kernel, obs_radius=0.0)
    A = NoiseGrid(cfg.seed, ids, sc.n, sc.kernel, sc.substeps)
    B = NoiseGrid(cfg.seed + 1, ids, sc.n, sc.kernel, sc.substeps)
    reg = cone_region(q, pc)
    ok = verify_cone(q, pc, cfg.sigma_spec(), A, SplicedNoise(A, B, reg), reg, cfg.initial_data())
    checks.append(_check("verify_cone_probes", bool(ok.all()), int(ok.sum()), n_probe, cfg))
    rows = [(int(i), int(j), rho[i, j]) for i, j in zip(*iu)]
    return ["i", "j", "rho"], rows, checks


def _agg_diagnostics(cfg, data):
    sc = cfg.scheme()
    P = cfg.params
    if "h_grid" in P:
        hs = list(P["h_grid"])
        t = sc.times[-1]
        rows, vals, checks = [], [], []
        for i, h in enumerate(hs):
            m, c = batch_means(data["inc_%d" % i])
            r = int(round(h / sc.dx))
            exact = lattice_increment_variance(r, t, sc.n, sc.kernel, cfg.sigma_spec().params.get("eps0", 1.0))
            rows.append((h, m / h, c / h, exact / h))
            vals.append(m / h)
            checks.append(_check("increment_h=%g" % h, abs(m - exact) <= c, m / h,
                                 [(exact - c) / h, (exact + c) / h], cfg))
        ratio = max(vals) / min(vals)
        checks.append(_check("flatness_ratio", ratio <= 4.0, ratio, 4.0, cfg))
        return ["h", "increment_var_over_h", "ci", "exact_over_h"], rows, checks
    v = data["values"]
    x = sc.obs_cells * sc.dx
    s = _Fields(v, sc.times, x)
    init = cfg.initial_data()
    sig = cfg.sigma_spec()
    diag = field_diagnostics(s, init, sc, sig)
    checks = []
    if diag["compact_support_ok"] is not None:
        checks.append(_check("exact_compact_support", diag["compact_support_ok"],
                             diag["support_violations"], 0, cfg))
    if sig.kind == "constant" and sig.params["eps0"] == 0.0:
        exact = initial_wave(s.times[:, None], x[None, :], init, sc.kernel)
        err = float(np.max(np.abs(v - exact)))
        checks.append(_check("deterministic_limit", err <= 1e-12, err, 1e-12, cfg))
    else:
        checks.append(_check("mean_identity_z4_fraction", diag["mean_identity_ok"],
                             diag["mean_identity_fraction"], 0.99, cfg))
    if diag["l2_growth_fit"] is not None and P.get("check_l2"):
        g = diag["l2_growth_fit"]
        checks.append(_check("l2_growth_window", g["ok"], g["rate"], g["window"], cfg))
    mean = v.mean(axis=0)
    rows = [(t, x[k], mean[i, k]) for i, t in enumerate(sc.times) for k in range(x.size)]
    return ["t", "x", "mean"], rows, checks


AGGREGATORS = {"simulate": _agg_simulate, "moments": _agg_moments, "lyapunov": _agg_lyapunov,
               "tails": _agg_tails, "supremum": _agg_supremum, "compare": _agg_compare,
               "localize": _agg_localize, "diagnostics": _agg_diagnostics}


# ---------------------------------------------------------------------------
# running, checkpoints, outputs
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    _atomic_write(path, buf.getvalue())


def _atomic_write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path, obj):
    _atomic_write(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


def run_experiment(cfg, out_dir=None, workers=1, resume=False, stop_after=None):
    """Run ``cfg`` into ``out_dir``; returns the verdict dict.

    ``stop_after`` stops once that many blocks are done (used to test resume).
    """
    out_dir = out_dir or os.path.join(default_out_root(), cfg.name or cfg.kind)
    ck = os.path.join(out_dir, "checkpoints")
    os.makedirs(ck, exist_ok=True)
    man_path = os.path.join(out_dir, "manifest.json")
    n_blocks = (cfg.replicas + BLOCK - 1) // BLOCK
    done = []
    if resume and os.path.exists(man_path):
        with open(man_path) as fh:
            man = json.load(fh)
        if man.get("config_hash") != cfg.hash():
            raise ConfigError("checkpoint config hash %s does not match config %s"
                              % (man.get("config_hash"), cfg.hash()))
        done = [b for b in man.get("blocks_done", [])
                if os.path.exists(os.path.join(ck, "block_%05d.npz" % b))]
    else:
        for f in os.listdir(ck):
            os.remove(os.path.join(ck, f))
    manifest = {"config_hash": cfg.hash(), "config": cfg.to_dict(), "block_size": BLOCK,
                "n_blocks": n_blocks, "blocks_done": sorted(done), "complete": False}
    _write_json(man_path, manifest)
    todo = [b for b in range(n_blocks) if b not in set(done)]
    if stop_after is not None:
        todo = todo[:max(0, stop_after - len(done))]
    jobs = [(cfg.to_dict(), b, os.path.join(ck, "block_%05d.npz" % b)) for b in todo]

    def mark(b):
        manifest["blocks_done"] = sorted(set(manifest["blocks_done"]) | {b})
        _write_json(man_path, manifest)

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for b in ex.map(_run_block, jobs):
                mark(b)
    else:
        for j in jobs:
            mark(_run_block(j))
    if len(manifest["blocks_done"]) < n_blocks:
        return None

    parts = []
    for b in range(n_blocks):
        with np.load(os.path.join(ck, "block_%05d.npz" % b)) as z:
            parts.append({k: z[k] for k in z.files})
    data = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    header, rows, checks = AGGREGATORS[cfg.kind](cfg, data)
    write_csv(os.path.join(out_dir, "results.csv"), header, rows)
    if cfg.kind == "simulate":
        sc = cfg.scheme()
        from .solver import _meta
        _write_json(os.path.join(out_dir, "results.csv.json"),
                    _meta(sc, cfg.initial_data(), cfg.sigma_spec(), cfg.seed))
    emit_plotdata(cfg.kind, header, rows, os.path.join(out_dir, "plotdata.csv"))
    verdict = {"experiment": cfg.name or cfg.kind, "kind": cfg.kind, "config_hash": cfg.hash(),
               "seed": cfg.seed, "replicas": cfg.replicas,
               "pass": all(c["pass"] for c in checks), "checks": checks}
    _write_json(os.path.join(out_dir, "verdict.json"), verdict)
    manifest["complete"] = True
    _write_json(man_path, manifest)
    return verdict


PLOT_COLUMNS = {"tails": ["lambda", "log_survival", "ci_lo", "ci_hi"],
                "supremum": ["R", "median_sup", "q25", "q75"]}


def emit_plotdata(kind, header, rows, path):
    """Long-format plot table: series plus (x, y, y_lo, y_hi) under kind-specific names."""
    cols = PLOT_COLUMNS.get(kind, ["x", "y", "y_lo", "y_hi"])
    out = []
    for r in rows:
        r = list(r)
        series = kind
        if isinstance(r[0], str):
            if ":" not in r[0]:
                continue
            series, xv = r[0].split(":", 1)
            r[0] = float(xv)
        y = r[1] if len(r) > 1 else float("nan")
        if len(r) >= 4 and kind in PLOT_COLUMNS:
            lo, hi = r[2], r[3]
        elif len(r) >= 3:
            lo, hi = y - r[2], y + r[2]
        else:
            lo = hi = y
        out.append((series, r[0], y, lo, hi))
    write_csv(path, ["series"] + cols, out)
    return path

"""The standard verification suite, shared by ``stochwave verify-all`` and the tests.

Each entry is an ExperimentConfig dict keyed by a short name. ``suite()``
applies a seed and an optional replica cap.
"""

import math

from .experiments import ExperimentConfig

SQRT2 = math.sqrt(2.0)

_ONE = {"u0": {"kind": "constant", "c": 1.0}, "v0": {"kind": "constant", "c": 0.0}}
_BUMP = {"u0": {"kind": "bump", "K": 0.5, "alpha": 0.5, "height": 1.0},
         "v0": {"kind": "constant", "c": 0.0}}
_SANDWICH = {"kind": "sandwich", "center": 1.0, "amplitude": 0.5, "omega": 1.0}

SUITE = {
    "deterministic_constant": dict(
        kind="diagnostics", n=6, T=2.0, L=3.0, replicas=4, obs_times=[0.5, 1.0, 2.0],
        init={"u0": {"kind": "constant", "c": 1.5}, "v0": {"kind": "constant", "c": 0.25}},
        sigma={"kind": "constant", "eps0": 0.0}),
    "deterministic_bump": dict(
        kind="diagnostics", n=6, T=1.0, L=2.5, replicas=4, obs_times=[0.25, 0.5, 1.0],
        init={"u0": {"kind": "bump", "K": 0.5, "alpha": 0.5, "height": 1.0},
              "v0": {"kind": "indicator", "K": 0.25, "height": 0.5}},
        sigma={"kind": "constant", "eps0": 0.0}),
    "gaussian_moments": dict(
        kind="moments", n=6, T=2.0, L=2.5, replicas=10000, obs_times=[0.5, 1.0, 2.0],
        obs_radius=0.25, init=_ONE, sigma={"kind": "constant", "eps0": 1.0},
        params={"oracle": "gaussian"}),
    "anderson_moments": dict(
        kind="moments", n=7, T=1.0, L=1.25, replicas=10000, obs_radius=0.25, init=_ONE,
        sigma={"kind": "linear", "lam": SQRT2},
        params={"oracle": "anderson", "trend_levels": [5, 6, 7], "rel_tol": 0.05}),
    "comparison": dict(
        kind="compare", n=6, T=1.0, L=2.0, replicas=100, substeps=8,
        init={"u0": {"kind": "constant", "c": 2.0}, "v0": {"kind": "constant", "c": 0.0}},
        sigma={"kind": "linear", "lam": 1.0},
        params={"init2": _ONE, "substeps_list": [8, 16]}),
    "compact_support": dict(
        kind="diagnostics", n=6, T=1.0, L=2.5, replicas=256, obs_times=[0.25, 0.5, 1.0],
        init=_BUMP, sigma={"kind": "linear", "lam": 1.0}),
    "localization": dict(
        kind="localize", n=4, T=1.0, L=13.0, replicas=10000, obs_radius=12.0, init=_ONE,
        sigma={"kind": "linear", "lam": 1.0},
        params={"q": 3, "points": [-12.0, -6.0, 0.0, 6.0, 12.0], "probes": 100}),
    "picard_decay": dict(
        kind="localize", n=5, T=1.0, L=1.5, replicas=1024, obs_radius=0.5, init=_ONE,
        sigma={"kind": "linear", "lam": 1.0},
        params={"mode": "gaps", "orders": [1, 2, 3, 4, 5, 6, 7, 8]}),
    "bounded_lyapunov": dict(
        kind="lyapunov", n=4, T=8.0, L=8.0, replicas=4096,
        obs_times=[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], obs_radius=0.0, init=_ONE,
        sigma=_SANDWICH, params={"degree": 2, "zero_in_ci": True, "envelope": True}),
    "anderson_lyapunov": dict(
        kind="lyapunov", n=4, T=6.0, L=6.0, replicas=10000,
        obs_times=[3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0], obs_radius=0.0, init=_ONE,
        sigma={"kind": "linear", "lam": SQRT2},
        params={"degree": 0, "rate_range": [0.8, 1.3], "min_span": 2.0}),
    "bounded_tails": dict(
        kind="tails", n=4, T=1.0, L=1.0, replicas=100000, obs_radius=0.0, init=_ONE,
        sigma=_SANDWICH, params={"fit": "gaussian", "r2_min": 0.9}),
    "supremum": dict(
        kind="supremum", n=3, T=1.0, L=1025.0, replicas=1000, obs_radius=1024.0,
        init={"u0": {"kind": "constant", "c": 0.1}, "v0": {"kind": "constant", "c": 0.0}},
        sigma=_SANDWICH,
        params={"R_grid": [2.0 ** k for k in range(4, 11)], "exponent_range": [0.3, 0.7],
                "trend_sigma": {"kind": "bounded_below", "eps0": 0.5, "lam": 1.0}}),
    "holder": dict(
        kind="diagnostics", n=6, T=1.0, L=2.0, replicas=2048, obs_radius=1.0, init=_ONE,
        sigma={"kind": "constant", "eps0": 1.0},
        params={"h_grid": [1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2]}),
}


def suite(seed=0, max_replicas=None, names=None):
    """ExperimentConfigs of the suite, in a fixed order."""
    out = []
    for name in (names or SUITE):
        d = dict(SUITE[name], name=name, seed=seed)
        if max_replicas is not None:
            d["replicas"] = min(d["replicas"], int(max_replicas))
        out.append(ExperimentConfig.from_dict(d))
    return out


def kernel_identity_errors(n_points=100, seed=0):
    """Max relative error of kernel_identities against quadrature of kernel_value.

    The (t, beta, kappa) grid is a fixed pseudo-random draw of ``n_points``.
    Gauss rules are exact here: the kernel is piecewise constant in x, its
    squared L^2 norm is linear in s, and the Laplace weight is handled by
    Gauss-Laguerre nodes.
    """
    import numpy as np

    from .kernel import WaveKernel, kernel_identities, kernel_value

    gx, gw = np.polynomial.legendre.leggauss(8)
    lx, lw = np.polynomial.laguerre.laggauss(8)

    def l2(s, kern):
        # integral over x of G(s, x)^2, piecewise on [-2r, -r], [-r, r], [r, 2r]
        s = np.asarray(s, dtype=float)[..., None]
        r = kern.kappa * s
        total = 0.0
        for a, b in ((-2 * r, -r), (-r, r), (r, 2 * r)):
            x = 0.5 * (b - a) * gx + 0.5 * (a + b)
            total = total + 0.5 * (b - a)[..., 0] * (kernel_value(s, x, kern) ** 2 @ gw)
        return total

    rng = np.random.default_rng(seed)
    ts = rng.uniform(0.05, 10.0, n_points)
    betas = rng.uniform(0.1, 10.0, n_points)
    kappas = rng.uniform(0.1, 5.0, n_points)
    worst = 0.0
    for t, b, k in zip(ts, betas, kappas):
        kern = WaveKernel(float(k))
        ids = kernel_identities(float(t), float(b), kern)
        ti = 0.5 * t * (l2(0.5 * t * (gx + 1.0), kern) @ gw)
        ups = (l2(lx / b, kern) @ lw) / b
        for got, want in ((ids.l2, float(l2(t, kern))), (ids.time_integral, ti),
                          (ids.upsilon, ups)):
            worst = max(worst, abs(got - want) / abs(want))
    return worst

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochwave import (Bump, Constant, InitialData, SchemeConfig, SigmaSpec, WaveKernel,
                       comparison_report, estimate_moments, field_diagnostics, holder_modulus,
                       lyapunov_fit, sigma_traits, solve, sup_growth, tail_curve, weighted_norm)
from stochwave.estimators import (PowerSums, batch_means, batch_split, compare_coupled,
                                  increment_samples, mean_z_scores, moment_envelope_check,
                                  paley_zygmund_check, replica_sups, sup_growth_curve,
                                  top_decile_grid, tree_merge, wilson_interval)
from stochwave.solver import GuardBandError, Snapshots


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(20, 300), elements=st.floats(-1e3, 1e3)))
def test_batch_means_mean_is_sample_mean(x):
    m, h = batch_means(x)
    assert m == pytest.approx(x.mean(), abs=1e-9)
    assert h >= 0
    if x.size % 20 == 0:
        assert batch_split(x).mean() == pytest.approx(x.mean(), abs=1e-6)


def test_batch_means_coverage():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(400):
        m, h = batch_means(rng.normal(size=400))
        hits += abs(m) <= h
    assert 0.9 <= hits / 400 <= 0.99
    with pytest.raises(ValueError):
        batch_means(np.ones(10))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=1, max_size=40))
def test_tree_merge_shape_is_fixed(xs):
    merged = tree_merge([[x] for x in xs], lambda a, b: a + b)
    assert merged == xs
    assert tree_merge([PowerSums.of(np.array([x]), 2) for x in xs],
                      PowerSums.merge).moment(2) == pytest.approx(np.mean(np.square(xs)))


def _snap(values, times=(1.0,), x=None):
    values = np.asarray(values, dtype=float)
    x = np.arange(values.shape[-1], dtype=float) if x is None else x
    return Snapshots(np.asarray(times, dtype=float), x, values, np.arange(values.shape[0]), {})


def test_estimate_moments_on_known_gaussians():
    rng = np.random.default_rng(1)
    s = _snap(rng.normal(0, 2.0, size=(4000, 1, 3)))
    m2 = estimate_moments(s, [2], central=True)[0]
    assert abs(m2.estimate - 4.0) <= 2 * m2.ci
    per = estimate_moments(s, [4], pooled=False)
    assert len(per) == 3 and all(abs(e.estimate - 48.0) < 6 for e in per)
    with pytest.raises(ValueError):
        estimate_moments(_snap(np.ones((50, 1, 2))), [2])


def test_lyapunov_fit_recovers_rates():
    t = np.linspace(1, 8, 8)
    assert lyapunov_fit(t, 3 * np.exp(0.7 * t), 2).rate == pytest.approx(0.7, abs=1e-10)
    poly = 1 + 2 * t + 0.5 * t ** 2
    assert lyapunov_fit(t, poly, 2, prefactor_degree=2).rate == pytest.approx(0.0, abs=1e-6)
    assert lyapunov_fit(t, poly * np.exp(0.3 * t), 2, prefactor_degree=2).rate == pytest.approx(0.3, abs=1e-6)
    rng = np.random.default_rng(2)
    bm = np.exp(0.7 * t)[None, :] * rng.lognormal(0, 0.02, size=(20, t.size))
    f = lyapunov_fit(t, bm.mean(axis=0), 2, bm, traits=sigma_traits(SigmaSpec.linear(math.sqrt(2))),
                     kernel=WaveKernel())
    assert 0 < f.ci < 0.05
    assert not f.upper_violation and f.lower_violation
    with pytest.raises(ValueError):
        lyapunov_fit([1, 2], [1, 2], 2)
    with pytest.raises(ValueError):
        lyapunov_fit(t, -poly, 2)


def test_weighted_norm_relation():
    t = np.linspace(0, 5, 51)
    m = np.exp(1.2 * t)
    w = weighted_norm(t, m, 2, 2.0)
    assert w.norm_p == pytest.approx(1.0)
    assert w.N == pytest.approx(w.N_via_relation)
    with pytest.raises(ValueError):
        weighted_norm(t, m, 2, 0.0)


def test_wilson_interval_brackets_rate():
    lo, hi = wilson_interval(np.array([0, 5, 100]), 100)
    assert lo[0] == 0 and hi[0] > 0 and lo[2] < 1 and hi[2] == 1
    assert lo[1] < 0.05 < hi[1]


def test_tail_curve_gaussian_is_linear_in_lambda_squared():
    rng = np.random.default_rng(3)
    u = rng.normal(size=200000)
    lam = top_decile_grid(u)
    tc = tail_curve(u, lam)
    assert tc.r2 > 0.98 and tc.slope == pytest.approx(-0.5, rel=0.2)
    assert np.all(np.diff(tc.log_survival) <= 0)
    tc = tail_curve(u, np.array([1.0, 2.0, 50.0]))
    assert tc.empty.tolist() == [False, False, True]
    with pytest.raises(ValueError):
        tail_curve(u, lam, fit="log")


def test_paley_zygmund_and_envelopes():
    rng = np.random.default_rng(4)
    lhs, rhs, ok = paley_zygmund_check(rng.normal(size=5000))
    assert ok and lhs > rhs
    rows = moment_envelope_check(rng.normal(0, 0.5, size=5000), 1.0,
                                 sigma_traits(SigmaSpec.sandwich()), WaveKernel())
    assert all(r[-1] for r in rows)


def test_sup_growth_pieces():
    x = np.arange(-100, 101, dtype=float)
    rng = np.random.default_rng(5)
    vals = rng.normal(size=(300, x.size))
    grid = [4, 16, 64]
    s = replica_sups(vals, x, grid)
    assert np.all(np.diff(s, axis=1) >= 0)
    c = sup_growth_curve(s, grid)
    assert np.all(np.diff(c.median) > 0)
    # iid gaussian maxima grow like sqrt(2 log R)
    assert 0.3 < c.exponent < 0.9
    with pytest.raises(GuardBandError):
        replica_sups(vals, x, [200])
    with pytest.raises(ValueError):
        sup_growth(_snap(vals[:, None, :], x=x), 1.0, [4, 16])


def test_increments_and_holder():
    rng = np.random.default_rng(6)
    x = np.arange(0, 64) * 0.25
    walk = np.cumsum(rng.normal(0, 0.5, size=(500, 64)), axis=1)     # var(step) = h
    inc = increment_samples(walk, x, 0.5)
    assert inc.mean() == pytest.approx(0.5, rel=0.05)
    hc = holder_modulus(_snap(walk[:, None, :], x=x), 1.0, [0.25, 0.5, 1.0, 2.0])
    assert hc.ratio < 1.2
    with pytest.raises(ValueError):
        increment_samples(walk, x, 0.3)


def test_comparison_report():
    a = np.array([[1.0, 2.0, 3.0]])
    r = comparison_report(a, a - np.array([[0.0, -0.5, 1.0]]))
    assert r.violations == 1 and r.max_violation == 0.5 and not r.identical
    assert comparison_report(a, a).identical
    c = SchemeConfig(n=3, T=1.0, L=1.5)
    with pytest.raises(ValueError):
        compare_coupled(InitialData.constant(1.0), InitialData.constant(2.0), SigmaSpec.linear(1.0),
                        c, 0, np.arange(2))
    rep = compare_coupled(InitialData.constant(2.0), InitialData.constant(1.0),
                          SigmaSpec.constant(1.0), c, 0, np.arange(4))
    assert rep.violations == 0       # additive noise keeps the shift exactly


def test_field_diagnostics_on_solver_output():
    c = SchemeConfig(n=4, T=1.0, L=2.0, obs_times=(0.25, 0.5, 1.0))
    init = InitialData(Bump(0.5, 0.5), Constant(0.0))
    sig = SigmaSpec.linear(1.0)
    s = solve(c, init, sig, 0, np.arange(200))
    d = field_diagnostics(s, init, c, sig)
    assert d["compact_support_ok"] and d["support_violations"] == 0
    assert d["mean_identity_ok"]
    assert d["l2_growth_fit"] is not None
    z = mean_z_scores(s, init, c.kernel)
    assert z.shape == (3, s.x.size) and np.all(np.isfinite(z))

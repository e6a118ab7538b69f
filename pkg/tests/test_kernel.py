import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad, trapezoid

from stochwave import (Bump, Constant, Indicator, InitialData, SigmaSpec, Tabulated, WaveKernel,
                       anderson_second_moment_oracle, bound_curves, gaussian_moment_oracle,
                       initial_wave, kernel_identities, kernel_value, sigma_traits)
from stochwave.kernel import (bounded_sigma_moment_envelope, continuum_increment_variance,
                              profile_from_dict)

pos = st.floats(0.05, 20.0)


def test_kernel_value_cone():
    k = WaveKernel(2.0)
    assert kernel_value(1.0, 2.0, k) == 0.5          # closed cone
    assert kernel_value(1.0, 2.0 + 1e-9, k) == 0.0
    assert np.all(kernel_value(1.0, np.array([-1.0, 0.0, 1.0]), k) == 0.5)
    with pytest.raises(ValueError):
        kernel_value(0.0, 0.0, k)
    with pytest.raises(ValueError):
        WaveKernel(0.0)


@settings(max_examples=50, deadline=None)
@given(t=pos, beta=pos, kappa=st.floats(0.1, 5.0))
def test_kernel_identities_against_quadrature(t, beta, kappa):
    k = WaveKernel(kappa)
    ids = kernel_identities(t, beta, k)
    l2 = lambda s: quad(lambda x: kernel_value(s, x, k) ** 2, -2 * kappa * s, 2 * kappa * s,
                        points=[-kappa * s, kappa * s])[0]
    assert ids.l2 == pytest.approx(l2(t), rel=1e-10)
    assert ids.time_integral == pytest.approx(kappa * t * t / 4, rel=1e-14)
    ups = quad(lambda s: math.exp(-beta * s) * kappa * s / 2, 0, math.inf)[0]
    assert ids.upsilon == pytest.approx(ups, rel=1e-8)


def test_kernel_identities_rejects_bad_input():
    with pytest.raises(ValueError):
        kernel_identities(0.0, 1.0, WaveKernel())
    with pytest.raises(ValueError):
        kernel_identities(1.0, -1.0, WaveKernel())


@pytest.mark.parametrize("prof", [Bump(0.7, 0.5, 2.0), Bump(1.0, 1.0), Indicator(0.3, 1.5),
                                  Tabulated([-1, 0, 0.5, 2], [0, 1, 3, 0]), Constant(1.3)])
def test_profile_integral_matches_quadrature(prof):
    for a, b in [(-2.0, 2.0), (-0.2, 0.4), (0.1, 3.0)]:
        pts = [p for p in (-1, 0, 0.3, 0.5, 0.7, 1.0, 2.0) if a < p < b]
        want = quad(prof, a, b, points=pts or None, limit=200)[0]
        assert prof.integral(a, b) == pytest.approx(want, abs=1e-7)
    assert profile_from_dict(prof.to_dict()).to_dict() == prof.to_dict()


def test_initial_data_validation():
    with pytest.raises(ValueError):
        InitialData(Constant(-1.0), Constant(0.0))
    with pytest.raises(ValueError):
        Bump(0.0)
    with pytest.raises(ValueError):
        Tabulated([0, 0], [1, 1])
    d = InitialData(Bump(0.5), Indicator(0.25))
    assert d.support == 0.5 and not d.is_constant
    assert InitialData.constant().support is None
    assert InitialData.constant(0.0, 0.0).support == 0.0
    assert InitialData.from_dict(d.to_dict()).to_dict() == d.to_dict()


def test_initial_wave_constant_and_dalembert():
    k = WaveKernel(2.0)
    d = InitialData.constant(1.5, 0.25)
    assert initial_wave(0.0, 3.0, d, k) == pytest.approx(1.5)
    assert initial_wave(1.0, 0.0, d, k) == pytest.approx(1.5 + 0.25 * 2.0)
    b = InitialData(Bump(0.5, 1.0), Constant(0.0))
    # pulses split and travel at speed kappa
    assert initial_wave(1.0, 2.0, b, k) == pytest.approx(0.5)
    assert initial_wave(1.0, 0.0, b, k) == 0.0


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-3, 3), t=st.floats(0, 2))
def test_initial_wave_symmetric_data_gives_symmetric_field(x, t):
    d = InitialData(Bump(0.8, 0.5), Indicator(0.4, 0.7))
    k = WaveKernel(1.3)
    assert initial_wave(t, x, d, k) == pytest.approx(initial_wave(t, -x, d, k), abs=1e-12)


def test_sigma_catalog_and_traits():
    s = SigmaSpec.sandwich(1.0, 0.5, 2.0)
    tr = sigma_traits(s)
    assert tr.lip == 1.0 and tr.eps0 == 0.5 and tr.s0 == 1.5
    z = np.linspace(-5, 5, 1001)
    assert np.all(np.abs(np.diff(s(z)) / np.diff(z)) <= tr.lip + 1e-9)
    assert SigmaSpec.linear(2.0).vanishes_at_zero
    assert not SigmaSpec.bounded_below().vanishes_at_zero
    ld = SigmaSpec.log_decay(0.1)
    assert np.all(np.abs(np.diff(ld(z)) / np.diff(z)) <= sigma_traits(ld).lip + 1e-9)
    for spec in [s, SigmaSpec.linear(1.0), SigmaSpec.constant(0.3), ld, SigmaSpec.bounded_below()]:
        assert SigmaSpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()
    with pytest.raises(ValueError):
        SigmaSpec.sandwich(0.5, 0.5)
    with pytest.raises(ValueError):
        SigmaSpec.custom(np.tanh, lip=None)
    c = sigma_traits(SigmaSpec.custom(lambda z: 1 + 0.5 * np.tanh(z), lip=0.5))
    assert c.lip == 0.5 and c.eps0 == pytest.approx(0.5, abs=1e-3)


def test_anderson_oracle_solves_renewal():
    k = WaveKernel(1.5)
    lam, v0 = 0.8, 0.3
    ts = np.linspace(0, 2, 2001)
    f = anderson_second_moment_oracle(ts, lam, k, v0)
    # f(t) = (1 + v0 k t)^2 + lam^2 k/2 int_0^t f(s)(t-s) ds
    t = ts[-1]
    rhs = (1 + v0 * k.kappa * t) ** 2 + lam ** 2 * k.kappa / 2 * trapezoid(f * (t - ts), ts)
    assert f[-1] == pytest.approx(rhs, rel=1e-6)
    assert anderson_second_moment_oracle(1.0, math.sqrt(2), WaveKernel()) == pytest.approx(math.cosh(1))


def test_gaussian_oracle():
    k = WaveKernel(2.0)
    var = 0.5 ** 2 * 2.0 * 1.5 ** 2 / 4
    assert gaussian_moment_oracle(1, 1.5, 0.5, k) == pytest.approx(var)
    assert gaussian_moment_oracle(2, 1.5, 0.5, k) == pytest.approx(3 * var ** 2)
    assert gaussian_moment_oracle(3, 1.5, 0.5, k) == pytest.approx(15 * var ** 3)
    assert gaussian_moment_oracle(1, 1.5, 0.5, k, central=False) == pytest.approx(1 + var)
    assert gaussian_moment_oracle(2, 1.5, 0.5, k, central=False) == pytest.approx(1 + 6 * var + 3 * var ** 2)


def test_bound_curves_and_envelope():
    tr = sigma_traits(SigmaSpec.linear(math.sqrt(2)))
    b = bound_curves(2, 1.0, tr, WaveKernel())
    assert b.lyap_lower_rate == pytest.approx(1.0)
    assert b.lyap_upper_rate == pytest.approx(2 ** 1.5)
    assert b.picard_a == pytest.approx(math.sqrt(2))
    assert bounded_sigma_moment_envelope(2, 1.0, 1.0, 0.0, 1.5, WaveKernel()) == pytest.approx(
        (1 + math.sqrt(2) * 1.5) ** 2)


def test_continuum_increment_variance():
    k = WaveKernel()
    # beyond the cone overlap time it is linear in h
    assert continuum_increment_variance(0.1, 1.0, k) == pytest.approx(
        0.5 * 0.05 ** 2 + 0.05 * 0.95)
    assert continuum_increment_variance(5.0, 1.0, k) == pytest.approx(0.5)

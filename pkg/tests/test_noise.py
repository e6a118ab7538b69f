import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from stochwave import NoiseGrid, NoiseKey, Rectangle, SplicedNoise, WaveKernel, agree_on, gaussian_at
from stochwave.noise import TracingNoise, cell_increments, gaussian_block

keys = st.tuples(st.integers(0, 2 ** 63 - 1), st.integers(0, 10 ** 6), st.integers(0, 5000),
                 st.integers(-10 ** 6, 10 ** 6), st.integers(0, 63))


@settings(max_examples=100, deadline=None)
@given(k=keys)
def test_gaussian_at_is_pure_and_matches_block(k):
    a = gaussian_at(NoiseKey(*k))
    assert a == gaussian_at(k)
    seed, r, j, l, s = k
    blk = gaussian_block(seed, [r], j, np.array([l]), s + 1)
    assert blk[0, 0, s] == a


def test_normal_marginals_and_independence():
    z = gaussian_block(7, np.arange(64), 3, np.arange(-200, 200), 4).ravel()
    assert stats.kstest(z, "norm").pvalue > 1e-3
    assert abs(np.corrcoef(z[:-1], z[1:])[0, 1]) < 0.02
    # neighbouring seeds and replicas are unrelated
    a = gaussian_block(7, [0], 3, np.arange(5000), 1).ravel()
    b = gaussian_block(8, [0], 3, np.arange(5000), 1).ravel()
    c = gaussian_block(7, [1], 3, np.arange(5000), 1).ravel()
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.06 and abs(np.corrcoef(a, c)[0, 1]) < 0.06


def test_grid_scale_and_order_independence():
    g = NoiseGrid(1, [4, 9], 3, WaveKernel(2.0), substeps=8)
    assert g.scale == pytest.approx(np.sqrt(2 ** -3 * 2 * 2 ** -3 / 8))
    full = g.row(5, np.arange(-6, 7))
    part = g.row(5, np.arange(6, -7, -1))
    assert np.array_equal(full, part[:, ::-1])
    one = NoiseGrid(1, 9, 3, WaveKernel(2.0), substeps=8)
    assert np.array_equal(cell_increments(one, 5, 2), full[1, 8])


def test_extent_is_enforced():
    g = NoiseGrid(0, 0, 2, n_steps=4, cells=(-3, 3))
    g.row(3, np.arange(-3, 4))
    with pytest.raises(IndexError):
        g.row(4, np.arange(-3, 4))
    with pytest.raises(IndexError):
        g.row(0, np.arange(-4, 0))


def test_splicing_and_agreement():
    a = NoiseGrid(1, np.arange(3), 3)
    b = NoiseGrid(2, np.arange(3), 3)
    reg = Rectangle(4, -2, 2)
    sp = SplicedNoise(a, b, reg)
    cells = np.arange(-5, 6)
    for j in range(6):
        row = sp.row(j, cells)
        inside = reg.contains(j, cells)
        assert np.array_equal(row[:, inside], a.row(j, cells)[:, inside])
        assert np.array_equal(row[:, ~inside], b.row(j, cells)[:, ~inside])
    assert agree_on(a, sp, reg)
    assert not agree_on(a, sp, Rectangle(4, -3, 2))
    assert not agree_on(a, b, Rectangle(1, 0, 0))
    with pytest.raises(ValueError):
        agree_on(a, NoiseGrid(1, np.arange(3), 4), reg)
    with pytest.raises(ValueError):
        SplicedNoise(a, NoiseGrid(1, np.arange(2), 3), reg)


def test_tracing_records_requests():
    t = TracingNoise(NoiseGrid(0, 0, 2))
    t.row(1, np.array([-1, 0, 1]))
    assert t.trace == [(1, (-1, 0, 1))]
    assert t.scale == t.base.scale

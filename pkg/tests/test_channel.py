import math

import numpy as np
import pytest
from scipy import stats

from mrdas.channel import (ChannelMatrix, LinkParams, assemble_channel, complex_correlation_for,
                           correlate_channel, draw_correlated_fading, draw_fading,
                           envelope_correlation, link_snr_db, pathloss,
                           rayleigh_envelope_correlation)
from mrdas.topology import DEFAULT_CELL_RADIUS as R, build_comp_layout, build_das_layout, select_mr


def test_pathloss_values():
    assert pathloss(1.0) == pytest.approx(128.1)
    assert pathloss(0.1) == pytest.approx(90.5)
    assert pathloss(10.0) == pytest.approx(165.7)
    with pytest.raises(ValueError):
        pathloss(0.0)


def test_noise_floor():
    assert LinkParams().noise_dbm == pytest.approx(-174 + 10 * math.log10(15e3))
    assert LinkParams().noise_dbm == pytest.approx(-132.24, abs=0.01)


def test_fading_moments(rng):
    h = draw_fading(1000, 1000, rng)
    assert abs(h.mean()) < 0.01
    assert np.mean(np.abs(h) ** 2) == pytest.approx(1.0, abs=0.01)
    env = np.abs(h[:100].ravel())
    assert stats.kstest(env, stats.rayleigh(scale=math.sqrt(0.5)).cdf).pvalue > 0.01


def test_envelope_mapping_monotone():
    xs = np.linspace(0, 1, 21)
    ys = [rayleigh_envelope_correlation(x) for x in xs]
    assert ys[0] == pytest.approx(0.0, abs=1e-12) and ys[-1] == pytest.approx(1.0)
    assert np.all(np.diff(ys) > 0)
    for r in (0.1, 0.5, 0.9):
        assert rayleigh_envelope_correlation(complex_correlation_for(r) ** 2) == pytest.approx(r)


@pytest.mark.parametrize("rho", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_correlated_fading_estimator(rng, rho):
    h = draw_fading(1000, 1000, rng)
    g = draw_correlated_fading(h, rho, rng)
    if rho == 1.0:
        assert np.array_equal(g, h)
    est = envelope_correlation(h, g)
    assert est == pytest.approx(rho, abs=0.02)
    assert np.mean(np.abs(g) ** 2) == pytest.approx(1.0, abs=0.01)


def test_correlation_rejects_out_of_range(rng):
    with pytest.raises(ValueError):
        draw_correlated_fading(np.ones((2, 2)), 1.5, rng)


def test_link_budget_matches_channel():
    lay = build_das_layout(R, direction="worst", d_over_r=0.9, rng=4)
    p = LinkParams(fiber_snr_db=None)
    ch = assemble_channel(lay, 23.0, np.random.default_rng(0), p,
                          fading=np.ones((6, 6), complex), shadowing_db=np.zeros((6, 6)))
    expect = link_snr_db(23.0, lay.distances(), 0.0, p)
    got = 10 * np.log10(np.abs(ch.gains) ** 2 / ch.noise_var[:, None])
    assert np.max(np.abs(got - expect)) < 1e-9


def test_fiber_noise_and_monotonicity():
    lay = build_das_layout(R, direction="best", d_over_r=0.8, rng=5)
    sh = np.zeros((6, 6))
    ch = assemble_channel(lay, 20.0, np.random.default_rng(0), LinkParams(), shadowing_db=sh)
    assert np.all(ch.noise_var > 1.0) and np.all(np.isfinite(ch.gains))
    # fibre noise sits 50 dB under the mean received signal of the row
    sig = np.sum(ch.large_scale**2, axis=1)
    assert np.allclose(10 * np.log10(sig / (ch.noise_var - 1.0)), 50.0)
    d = lay.distances()
    order = np.argsort(d[:, 1])
    assert np.all(np.diff(ch.large_scale[order, 1]) <= 0)
    ch0 = assemble_channel(lay, 20.0, np.random.default_rng(0), LinkParams(fiber_snr_db=None),
                           shadowing_db=sh)
    assert np.all(ch0.noise_var == 1.0)


def test_comp_wireless_backhaul():
    lay = build_comp_layout(R, d_over_r=0.7, rng=6)
    ch = assemble_channel(lay, 20.0, np.random.default_rng(1), backhaul="wireless")
    assert ch.gains.shape == (18, 6) and np.all(ch.noise_var == 1.0)
    # collocated antennas share the per-site shadowing value
    assert np.all(ch.shadowing_db[:6] == ch.shadowing_db[0])


def test_das_vs_comp_gain():
    das = build_das_layout(R, direction="best", d_over_r=0.7, rng=7)
    comp = build_comp_layout(R, d_over_r=0.7, rng=7)
    assert das.distances()[:, 0].min() < comp.distances()[:, 0].min()


def test_correlate_channel_limits(rng):
    lay = select_mr(build_das_layout(R, direction="best", d_over_r=0.9, rng=8), rng=8)
    a = assemble_channel(lay, 20.0, rng, n_uses=4)
    b = assemble_channel(lay, 20.0, rng, n_uses=4, transmitters="mr")
    assert np.allclose(correlate_channel(a, b, 1.0).gains, a.gains)
    assert np.allclose(correlate_channel(a, b, 0.0).gains, b.gains)
    assert np.allclose(correlate_channel(a, b, 0.0).noise_var, b.noise_var)


def test_channel_csv(rng):
    lay = build_das_layout(R, direction="best", d_over_r=0.9, rng=9)
    text = assemble_channel(lay, 20.0, rng).to_csv()
    assert text.splitlines()[0] == "i,k,re,im,gain_db" and len(text.splitlines()) == 37

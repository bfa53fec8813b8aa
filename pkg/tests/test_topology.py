import math

import numpy as np
import pytest
from scipy import stats

from mrdas.topology import (DEFAULT_CELL_RADIUS, PolarPoint, build_comp_layout, build_das_layout,
                            comp_sites, ra_ring, resolve_direction, sample_cell_edge, select_mr)

R = DEFAULT_CELL_RADIUS


def test_polar_roundtrip(rng):
    for t, r in zip(rng.uniform(0, 2 * math.pi, 100), rng.uniform(0, R, 100)):
        p = PolarPoint(t, r)
        q = PolarPoint.from_xy(p.xy)
        assert abs(q.xy - p.xy) < 1e-12


def test_ra_ring_positions():
    ras = ra_ring(R, 6)
    assert ras[0].theta == 0.0 and ras[0].radius == pytest.approx(0.7 * R)
    ang = np.array([p.theta for p in ras])
    nominal = np.array([2 * math.pi * i / 6 for i in range(6)])
    assert np.max(np.abs(ang - nominal)) == 0.0


def test_directions():
    assert resolve_direction("best") == 0.0
    assert resolve_direction("worst") == pytest.approx(math.pi / 6)


def test_best_direction_on_ra():
    lay = build_das_layout(R, direction="best", d_over_r=0.7, rng=1)
    d = lay.distances()[:, 0]
    assert d.min() < 1e-12 and lay.serving_ra()[0] == 0


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.2])
def test_reject_dr(bad):
    with pytest.raises(ValueError):
        build_das_layout(R, direction="best", d_over_r=bad, rng=1)


def test_cell_edge_uniform_area(rng):
    pts = sample_cell_edge(rng, R, 100_000)
    r = np.array([p.radius for p in pts]) / R
    assert r.min() > 0.5 and r.max() <= 1.0
    # uniform in area <=> (r^2 - 0.25)/0.75 uniform on (0, 1]
    u = (r**2 - 0.25) / 0.75
    counts, _ = np.histogram(u, bins=20, range=(0, 1))
    assert stats.chisquare(counts).pvalue > 0.01


def test_comp_geometry():
    bs, c = comp_sites(R)
    assert R == pytest.approx(3 / math.sqrt(3))
    assert abs(bs[0].xy) == 0
    assert abs(bs[1].xy - bs[2].xy) == pytest.approx(3.0)
    assert abs(bs[0].xy - bs[1].xy) == pytest.approx(3.0)
    lay = build_comp_layout(R, d_over_r=1.0, rng=2)
    d = lay.distances()[:, 0]
    assert d[6] == pytest.approx(d[12])
    lay0 = build_comp_layout(R, d_over_r=0.0, rng=2)
    assert lay0.distances()[0, 0] == 0.0
    assert lay.n_r == 18 and build_comp_layout(R, rng=2, cooperative=False).n_r == 6


def test_close_to_ms_within_vicinity(rng):
    for s in range(50):
        lay = select_mr(build_das_layout(R, direction="best", d_over_r=0.7, rng=s), rng=s)
        assert abs(lay.mr_xy()[0] - lay.ms_xy()[0]) <= 0.15 * R + 1e-12


def test_reliable_area_bound():
    for s in range(100):
        lay = build_das_layout(R, direction="best", d_over_r=1.0, rng=s)
        lay = select_mr(lay, "reliable_area", rng=s)
        ra = lay.ra_xy()[lay.serving_ra()]
        assert np.all(np.abs(lay.mr_xy() - ra) <= 0.2 * R + 1e-12)


def test_opposite_mrs_far_apart():
    for s in range(50):
        lay = build_das_layout(R, direction="best", d_over_r=0.8, rng=s, cochannel="same")
        mr = select_mr(lay, rng=s).mr_xy()
        assert abs(mr[0] - mr[3]) > 0.5 * R


def test_layout_csv():
    lay = select_mr(build_das_layout(R, direction="worst", d_over_r=0.9, rng=3), rng=3)
    lines = lay.to_csv().strip().splitlines()
    assert lines[0] == "node_kind,index,theta_rad,radius_km"
    assert len(lines) == 1 + 1 + 6 + 6 + 6

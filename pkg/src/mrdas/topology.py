"""Cell geometry for the DAS and CoMP uplink scenarios.

All positions share one Cartesian frame with the anchor BS ``B0`` at the
origin; distances are in km.  Internally positions are complex numbers
(``x + 1j*y``), the public types carry polar coordinates.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

BS_SPACING_KM = 3.0
DEFAULT_CELL_RADIUS = BS_SPACING_KM / math.sqrt(3.0)
RA_RING_FRACTION = 0.7
CELL_EDGE_FRACTION = 0.5

MODES = ("CAS", "CoMP-CAS", "FFR-DAS", "MR-FFR-DAS")
COCHANNEL_PLACEMENTS = ("radial", "sector", "annulus", "same")


@dataclass(frozen=True)
class PolarPoint:
    theta: float
    radius: float
    origin: str = "B0"

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"negative radius {self.radius}")
        object.__setattr__(self, "theta", float(self.theta) % (2 * math.pi))

    @property
    def xy(self) -> complex:
        return self.radius * complex(math.cos(self.theta), math.sin(self.theta))

    @classmethod
    def from_xy(cls, z: complex, origin: str = "B0") -> "PolarPoint":
        return cls(math.atan2(z.imag, z.real), abs(z), origin)


@dataclass
class ScenarioLayout:
    """Node placement for one trial.

    ``ra_positions`` lists every receive antenna; collocated BS antennas are
    repeated entries and share a ``ra_site`` index, so that shadowing can be
    drawn once per (transmitter, site) pair.
    """

    cell_radius: float
    ra_positions: list[PolarPoint]
    ms_positions: list[PolarPoint]
    mode: str = "FFR-DAS"
    mr_positions: Optional[list[PolarPoint]] = None
    comp_bs_positions: Optional[list[PolarPoint]] = None
    ra_site: Optional[list[int]] = None
    wanted: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.ra_site is None:
            self.ra_site = list(range(len(self.ra_positions)))

    @property
    def n_r(self) -> int:
        return len(self.ra_positions)

    @property
    def n_t(self) -> int:
        return len(self.ms_positions)

    def ra_xy(self) -> np.ndarray:
        return np.array([p.xy for p in self.ra_positions])

    def ms_xy(self) -> np.ndarray:
        return np.array([p.xy for p in self.ms_positions])

    def mr_xy(self) -> np.ndarray:
        if self.mr_positions is None:
            raise ValueError("layout has no mobile relays")
        return np.array([p.xy for p in self.mr_positions])

    def distances(self, transmitters: str = "ms") -> np.ndarray:
        """(n_r, n_t) receive-antenna to transmitter distances in km."""
        tx = self.ms_xy() if transmitters == "ms" else self.mr_xy()
        return np.abs(self.ra_xy()[:, None] - tx[None, :])

    def serving_ra(self, transmitters: str = "ms") -> np.ndarray:
        """Nearest receive antenna per transmitter; ties go to the lowest index."""
        return np.argmin(self.distances(transmitters), axis=0)

    def with_mrs(self, mr_positions: Sequence[PolarPoint], **meta) -> "ScenarioLayout":
        out = ScenarioLayout(
            cell_radius=self.cell_radius,
            ra_positions=list(self.ra_positions),
            ms_positions=list(self.ms_positions),
            mode="MR-FFR-DAS" if self.mode == "FFR-DAS" else self.mode,
            mr_positions=list(mr_positions),
            comp_bs_positions=self.comp_bs_positions,
            ra_site=list(self.ra_site),
            wanted=self.wanted,
            metadata={**self.metadata, **meta},
        )
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node_kind", "index", "theta_rad", "radius_km"])
        groups = [("bs", self.comp_bs_positions or [PolarPoint(0.0, 0.0)]),
                  ("ra", self.ra_positions), ("ms", self.ms_positions),
                  ("mr", self.mr_positions or [])]
        for kind, pts in groups:
            for i, p in enumerate(pts):
                w.writerow([kind, i, f"{p.theta:.12g}", f"{p.radius:.12g}"])
        return buf.getvalue()


def resolve_direction(direction, n_ra: int = 6) -> float:
    """Angle of a named direction inside sector 1.

    ``"best"`` points through RA 1, ``"worst"`` bisects RA 1 and RA 2.
    Numeric values are taken as radians.
    """
    if direction == "best":
        return 0.0
    if direction == "worst":
        return math.pi / n_ra
    if isinstance(direction, str):
        raise ValueError(f"unknown direction {direction!r}")
    return float(direction)


def ra_ring(cell_radius: float, n_ra: int, ring_fraction: float = RA_RING_FRACTION) -> list[PolarPoint]:
    if n_ra < 1:
        raise ValueError("need at least one RA")
    d_e = ring_fraction * cell_radius
    return [PolarPoint(2 * math.pi * i / n_ra, d_e) for i in range(n_ra)]


def _uniform_annulus_radius(rng, r_in, r_out, size=None):
    # 1 - U lies in (0, 1], so the radius lands in (r_in, r_out]
    u = 1.0 - rng.random(size)
    return np.sqrt(r_in**2 + u * (r_out**2 - r_in**2))


def sample_cell_edge(rng, cell_radius: float, n: int, theta_lo: float = 0.0,
                     theta_hi: float = 2 * math.pi,
                     edge_fraction: float = CELL_EDGE_FRACTION) -> list[PolarPoint]:
    """Draw ``n`` points uniformly in area over an annular sector (0.5R, R]."""
    r = _uniform_annulus_radius(rng, edge_fraction * cell_radius, cell_radius, n)
    th = theta_lo + (theta_hi - theta_lo) * rng.random(n)
    return [PolarPoint(t, rr) for t, rr in zip(th, r)]


def build_das_layout(cell_radius: float = DEFAULT_CELL_RADIUS, n_ra: int = 6, n_ms: int = 6,
                     direction=None, d_over_r: Optional[float] = None, rng=None,
                     cochannel: str = "radial", ring_fraction: float = RA_RING_FRACTION,
                     edge_fraction: float = CELL_EDGE_FRACTION) -> ScenarioLayout:
    """Place RAs on the ring and MSs in the cell-edge area.

    With ``direction=None`` every MS is drawn uniformly over the cell-edge
    annulus.  Otherwise MS 0 (the wanted MS) sits at ``(direction, d_over_r*R)``
    and MS ``k`` is a co-channel user in sector ``k mod n_ra`` placed
    according to ``cochannel``:

    ``radial``
        on the radial through its own RA, radius uniform in (0.5R, R]
    ``same``
        same relative direction as the wanted MS, radius uniform in (0.5R, R]
    ``sector``
        uniform over its own annular sector
    ``annulus``
        uniform over the whole cell-edge annulus
    """
    rng = np.random.default_rng(rng)
    ras = ra_ring(cell_radius, n_ra, ring_fraction)
    if direction is None:
        ms = sample_cell_edge(rng, cell_radius, n_ms, edge_fraction=edge_fraction)
        return ScenarioLayout(cell_radius, ras, ms, mode="FFR-DAS")

    if d_over_r is None or not (0.0 < d_over_r <= 1.0):
        raise ValueError(f"d/R must lie in (0, 1], got {d_over_r}")
    if cochannel not in COCHANNEL_PLACEMENTS:
        raise ValueError(f"unknown co-channel placement {cochannel!r}")
    theta = resolve_direction(direction, n_ra)
    ms = [PolarPoint(theta, d_over_r * cell_radius)]
    half = math.pi / n_ra
    for k in range(1, n_ms):
        centre = 2 * math.pi * (k % n_ra) / n_ra
        if cochannel == "annulus":
            ms += sample_cell_edge(rng, cell_radius, 1, edge_fraction=edge_fraction)
        elif cochannel == "sector":
            ms += sample_cell_edge(rng, cell_radius, 1, centre - half, centre + half, edge_fraction)
        else:
            r = float(_uniform_annulus_radius(rng, edge_fraction * cell_radius, cell_radius))
            ms.append(PolarPoint(centre + (theta if cochannel == "same" else 0.0), r))
    return ScenarioLayout(cell_radius, ras, ms, mode="FFR-DAS",
                          metadata={"direction": direction, "d_over_r": d_over_r})


def comp_sites(cell_radius: float = DEFAULT_CELL_RADIUS) -> tuple[list[PolarPoint], PolarPoint]:
    """The three collaborating BSs and the centre C of the CoMP area.

    C lies at distance R from every BS, so B0-C has length R and B0-B1 has
    length sqrt(3) R (3 km with the default radius).
    """
    c = complex(cell_radius, 0.0)
    bs = [c + cell_radius * np.exp(1j * a) for a in (math.pi, math.pi / 3, -math.pi / 3)]
    bs[0] = 0j
    return [PolarPoint.from_xy(z) for z in bs], PolarPoint.from_xy(c)


def build_comp_layout(cell_radius: float = DEFAULT_CELL_RADIUS, n_bs_antennas: int = 6,
                      n_ms: int = 6, d_over_r: float = 0.5, rng=None,
                      cooperative: bool = True) -> ScenarioLayout:
    """CoMP-CAS (or plain CAS when ``cooperative`` is False) layout.

    MS 0 roams on the segment B0-C at ``d_over_r * R``; the remaining MSs are
    uniform over the B0-centred disc of radius R.
    """
    if not (0.0 <= d_over_r <= 1.0):
        raise ValueError(f"d/R must lie in [0, 1], got {d_over_r}")
    if n_bs_antennas < 1:
        raise ValueError("need at least one BS antenna")
    rng = np.random.default_rng(rng)
    bs, _ = comp_sites(cell_radius)
    used = bs if cooperative else bs[:1]
    ras, sites = [], []
    for s, b in enumerate(used):
        ras += [b] * n_bs_antennas
        sites += [s] * n_bs_antennas
    r = cell_radius * np.sqrt(1.0 - rng.random(n_ms - 1))
    th = 2 * math.pi * rng.random(n_ms - 1)
    ms = [PolarPoint(0.0, d_over_r * cell_radius)] + [PolarPoint(t, rr) for t, rr in zip(th, r)]
    return ScenarioLayout(cell_radius, ras, ms, mode="CoMP-CAS" if cooperative else "CAS",
                          comp_bs_positions=bs, ra_site=sites,
                          metadata={"d_over_r": d_over_r})


def _vicinity_axis(ms: complex, ra: complex) -> float:
    """Direction the MR half-disc opens towards."""
    v = ra - ms
    if abs(v) < 1e-9:
        v = -ms
    if abs(v) < 1e-12:
        return 0.0
    return math.atan2(v.imag, v.real)


def select_mr(layout: ScenarioLayout, strategy: str = "close_to_ms", rng=None,
              vicinity_radius: Optional[float] = None,
              reliable_radius: Optional[float] = None, max_draws: int = 4096) -> ScenarioLayout:
    """Attach one mobile relay per MS.

    ``close_to_ms`` draws the MR uniformly from the half-disc of radius r_v
    centred on the MS and opening towards its serving RA.  ``reliable_area``
    restricts that half-disc to within r_rel of the serving RA; when the two
    regions do not intersect the MR is put at the point of the reliable disc
    closest to the MS and ``metadata["mr_fallback"]`` records it.
    """
    if strategy not in ("close_to_ms", "reliable_area"):
        raise ValueError(f"unknown MR strategy {strategy!r}")
    rng = np.random.default_rng(rng)
    R = layout.cell_radius
    r_v = 0.15 * R if vicinity_radius is None else vicinity_radius
    r_rel = 0.2 * R if reliable_radius is None else reliable_radius
    ras = layout.ra_xy()
    serving = layout.serving_ra()
    mrs, fallback = [], []
    for k, ms in enumerate(layout.ms_xy()):
        ra = ras[serving[k]]
        axis = _vicinity_axis(ms, ra)
        if strategy == "close_to_ms":
            rho = r_v * math.sqrt(rng.random())
            phi = axis + (rng.random() - 0.5) * math.pi
            mrs.append(PolarPoint.from_xy(ms + rho * np.exp(1j * phi)))
            fallback.append(False)
            continue
        rho = r_v * np.sqrt(rng.random(max_draws))
        phi = axis + (rng.random(max_draws) - 0.5) * math.pi
        cand = ms + rho * np.exp(1j * phi)
        ok = np.flatnonzero(np.abs(cand - ra) <= r_rel)
        if ok.size:
            mrs.append(PolarPoint.from_xy(complex(cand[ok[0]])))
            fallback.append(False)
        else:
            u = ms - ra
            u = u / abs(u) if abs(u) > 0 else 1.0
            mrs.append(PolarPoint.from_xy(ra + r_rel * u))
            fallback.append(True)
    return layout.with_mrs(mrs, mr_strategy=strategy, mr_fallback=fallback)

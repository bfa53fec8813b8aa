"""Pathloss-only uplink SIR model, target-tracking power control, QoS maps.

Every MS is received at its serving RA; all other co-channel MSs interfere
there.  No fading and no noise enter this model, so it is invariant to a
common power offset.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .topology import (CELL_EDGE_FRACTION, DEFAULT_CELL_RADIUS, RA_RING_FRACTION, ScenarioLayout,
                       ra_ring)

PATHLOSS_SLOPE_DB = 37.6
TARGET_SIR_DB = 15.0
POWER_BOUNDS_DBM = (20.0, 30.0)
PC_ITERATIONS = 20
MIN_DISTANCE_KM = 1e-3


def sir_single(d_i, d_w, slope: float = PATHLOSS_SLOPE_DB):
    """SIR in dB of the wanted link against one equal-power interferer."""
    d_i = np.asarray(d_i, float)
    d_w = np.asarray(d_w, float)
    if np.any(d_i <= 0) or np.any(d_w <= 0):
        raise ValueError("distances must be positive")
    out = slope * np.log10(d_i / d_w)
    return float(out) if out.ndim == 0 else out


def sir_multi(sirs_db, axis: int = -1):
    """Aggregate per-interferer SIRs: -10 log10 sum 10^(-SIR_i/10).

    An empty interferer set returns ``inf``.
    """
    s = np.asarray(sirs_db, float)
    if s.size == 0 or s.shape[axis] == 0:
        return math.inf if s.ndim <= 1 else np.full(np.delete(s.shape, axis), np.inf)
    with np.errstate(divide="ignore"):
        out = -10 * np.log10(np.sum(10 ** (-s / 10), axis=axis))
    return float(out) if np.ndim(out) == 0 else out


def sir_with_control(d_i, d_w, p_w, p_i, slope: float = PATHLOSS_SLOPE_DB):
    return sir_single(d_i, d_w, slope) + np.asarray(p_w, float) - np.asarray(p_i, float)


def sir_multi_with_control(d_i, d_w, p_w, p_i, slope: float = PATHLOSS_SLOPE_DB):
    """Aggregate SIR with per-MS transmit powers (dBm)."""
    return sir_multi(sir_with_control(d_i, d_w, p_w, p_i, slope))


def _sir_all(D: np.ndarray, p: np.ndarray, slope: float) -> np.ndarray:
    """SIR of every MS; ``D[..., k, j]`` = distance of MS j to the serving RA of MS k."""
    rx = p[..., None, :] - slope * np.log10(D)
    own = np.einsum("...kk->...k", rx)
    # per-interferer SIRs relative to the own signal, so a common power offset cancels first
    rel = own[..., :, None] - rx
    n = rel.shape[-1]
    rel[..., np.arange(n), np.arange(n)] = np.inf
    return sir_multi(rel)


@dataclass
class SirScenario:
    """Distances and powers for one set of co-channel MSs.

    ``distances[k, j]`` is the distance from MS j to the RA serving MS k;
    a leading batch axis is allowed.
    """

    distances: np.ndarray
    tx_powers: np.ndarray
    target_sir: float = TARGET_SIR_DB
    power_bounds: tuple = POWER_BOUNDS_DBM
    wanted: int = 0
    slope: float = PATHLOSS_SLOPE_DB

    def __post_init__(self):
        self.distances = np.maximum(np.asarray(self.distances, float), MIN_DISTANCE_KM)
        n = self.distances.shape[-1]
        if self.distances.shape[-2] != n:
            raise ValueError("distance matrix must be square in its last two axes")
        self.tx_powers = np.broadcast_to(np.asarray(self.tx_powers, float),
                                         self.distances.shape[:-1]).copy()

    @classmethod
    def from_layout(cls, layout: ScenarioLayout, tx_powers=POWER_BOUNDS_DBM[0], **kw) -> "SirScenario":
        d = layout.distances("ms")
        return cls(d[layout.serving_ra("ms"), :], tx_powers, wanted=layout.wanted, **kw)

    @property
    def n_ms(self) -> int:
        return self.distances.shape[-1]

    def sir(self, powers: Optional[np.ndarray] = None) -> np.ndarray:
        p = self.tx_powers if powers is None else np.asarray(powers, float)
        if self.n_ms == 1:
            return np.full(p.shape, np.inf)
        return _sir_all(self.distances, p, self.slope)


@dataclass
class PowerControlResult:
    powers: np.ndarray
    sir: np.ndarray
    power_trace: np.ndarray = field(repr=False)
    sir_trace: np.ndarray = field(repr=False)


def run_power_control(scenario: SirScenario, target_sir: Optional[float] = None,
                      iterations: int = PC_ITERATIONS) -> PowerControlResult:
    """Synchronous target tracking in the dB domain.

    Each MS moves its power by ``target - SIR`` (the multiplicative linear
    update), then clips to the power bounds.  Infeasible targets saturate at
    the bounds; the returned trace shows the shortfall.
    """
    target = scenario.target_sir if target_sir is None else target_sir
    lo, hi = scenario.power_bounds
    p = np.clip(scenario.tx_powers, lo, hi)
    ptr, strace = [p], [scenario.sir(p)]
    for _ in range(iterations):
        with np.errstate(invalid="ignore"):
            p = np.clip(p + target - strace[-1], lo, hi)
        p = np.where(np.isnan(p), lo, p)
        ptr.append(p)
        strace.append(scenario.sir(p))
    return PowerControlResult(p, strace[-1], np.array(ptr), np.array(strace))


QOS_TOL_DB = 1e-9


def qos_count(sir_db: np.ndarray, threshold: float = TARGET_SIR_DB, tol: float = QOS_TOL_DB) -> np.ndarray:
    """Number of MSs with SIR above the threshold.

    Power control drives many MSs exactly onto the target, so an SIR within
    ``tol`` dB of the threshold counts as meeting it; a bare ``>`` would make
    the count depend on rounding.
    """
    return np.sum(np.asarray(sir_db) > threshold - tol, axis=-1)


# ---------------------------------------------------------------- QoS map

@dataclass
class QosMap:
    theta: np.ndarray
    radius_over_r: np.ndarray
    n_passing: np.ndarray
    n_ms: int
    threshold: float
    meta: dict = field(default_factory=dict)

    def area_fraction(self, k: int) -> float:
        """Share of the (equal-area) grid cells where exactly ``k`` MSs pass."""
        return float(np.mean(self.n_passing == k))

    def fractions(self) -> dict:
        return {k: self.area_fraction(k) for k in range(self.n_ms + 1)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta_rad", "radius_over_R", "n_ms_passing", "fraction"])
        for i, t in enumerate(self.theta):
            for j, r in enumerate(self.radius_over_r):
                n = int(self.n_passing[i, j])
                w.writerow([f"{t:.9g}", f"{r:.9g}", n, f"{n / self.n_ms:.9g}"])
        return buf.getvalue()


def sector_grid(n: int = 100, n_ra: int = 6, edge_fraction: float = CELL_EDGE_FRACTION):
    """Cell-centred polar grid over the sector [0, pi/n_ra] x (edge*R, R], equal-area cells."""
    theta = (np.arange(n) + 0.5) / n * (math.pi / n_ra)
    e2 = edge_fraction**2
    rho = np.sqrt(e2 + (np.arange(n) + 0.5) / n * (1 - e2))
    return theta, rho


def qos_map(n_grid: int = 100, threshold: float = TARGET_SIR_DB, power_control: bool = True,
            cell_radius: float = DEFAULT_CELL_RADIUS, n_ra: int = 6, n_ms: int = 6,
            p_start: float = POWER_BOUNDS_DBM[0], power_bounds=POWER_BOUNDS_DBM,
            iterations: int = PC_ITERATIONS, ring_fraction: float = RA_RING_FRACTION,
            edge_fraction: float = CELL_EDGE_FRACTION) -> QosMap:
    """QoS count over the observation sector.

    At every grid point (theta, rho) MS 0 sits at the point and co-channel
    MS k sits on the radial through RA k at the same normalised radius, so
    the whole user population roams outward together.
    """
    theta, rho = sector_grid(n_grid, n_ra, edge_fraction)
    ras = np.array([p.xy for p in ra_ring(cell_radius, n_ra, ring_fraction)])
    T, P = np.meshgrid(theta, rho, indexing="ij")
    ang = np.broadcast_to(2 * np.pi * (np.arange(n_ms) % n_ra) / n_ra, T.shape + (n_ms,)).copy()
    ang[..., 0] = T
    pos = (P * cell_radius)[..., None] * np.exp(1j * ang)
    d = np.maximum(np.abs(pos[..., None, :] - ras[:, None]), MIN_DISTANCE_KM)  # (..., ra, ms)
    serving = np.argmin(d, axis=-2)
    D = np.take_along_axis(d, serving[..., :, None], axis=-2)  # (..., k, j)
    scen = SirScenario(D, p_start, threshold, tuple(power_bounds))
    sir = run_power_control(scen, iterations=iterations).sir if power_control else scen.sir()
    return QosMap(theta, rho, qos_count(sir, threshold), n_ms, threshold,
                  {"power_control": power_control, "n_grid": n_grid})

"""Composite wireless + fibre channel matrices.

Amplitudes are kept in noise-normalised units: the wireless thermal noise
per subcarrier has unit variance, so ``large_scale[i, k]**2`` is the mean
received SNR of transmitter ``k`` at antenna ``i`` before fibre scaling.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import hyp2f1

from .topology import ScenarioLayout


@dataclass(frozen=True)
class LinkParams:
    pathloss_intercept_db: float = 128.1
    pathloss_slope_db: float = 37.6
    shadowing_std_db: float = 8.0
    noise_psd_dbm_hz: float = -174.0
    subcarrier_spacing_hz: float = 15e3
    n_subcarriers: int = 1200
    # total MS power is spread over all subcarriers
    spread_power: bool = True
    fiber_snr_db: Optional[float] = 50.0
    fiber_scale: float = 1.0
    min_distance_km: float = 1e-3

    @property
    def noise_dbm(self) -> float:
        """Thermal noise power in one subcarrier."""
        return self.noise_psd_dbm_hz + 10 * math.log10(self.subcarrier_spacing_hz)

    def per_subcarrier_dbm(self, tx_power_dbm):
        if self.spread_power:
            return np.asarray(tx_power_dbm, float) - 10 * math.log10(self.n_subcarriers)
        return np.asarray(tx_power_dbm, float)


def pathloss(d_km, intercept: float = 128.1, slope: float = 37.6):
    """Urban-macro pathloss in dB for distances in km."""
    d = np.asarray(d_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("pathloss distance must be positive")
    pl = intercept + slope * np.log10(d)
    return float(pl) if pl.ndim == 0 else pl


def link_snr_db(tx_power_dbm, d_km, shadowing_db=0.0, params: LinkParams = LinkParams()):
    """Analytic mean SNR of one wireless link, no fibre."""
    d = np.maximum(np.asarray(d_km, float), params.min_distance_km)
    return (params.per_subcarrier_dbm(tx_power_dbm)
            - pathloss(d, params.pathloss_intercept_db, params.pathloss_slope_db)
            - shadowing_db - params.noise_dbm)


def draw_fading(n_r: int, n_t: int, rng, n_uses: Optional[int] = None) -> np.ndarray:
    """i.i.d. CN(0, 1) coefficients, shape (n_r, n_t) or (n_uses, n_r, n_t)."""
    shape = (n_r, n_t) if n_uses is None else (n_uses, n_r, n_t)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def rayleigh_envelope_correlation(mag2) -> float:
    """Envelope correlation of two Rayleigh variables with |complex corr|^2 = mag2."""
    return (math.pi / 4) * (hyp2f1(-0.5, -0.5, 1.0, mag2) - 1.0) / (1.0 - math.pi / 4)


def complex_correlation_for(rho_env: float) -> float:
    """Invert :func:`rayleigh_envelope_correlation`; returns |rho_c|."""
    if not 0.0 <= rho_env <= 1.0:
        raise ValueError(f"envelope correlation must lie in [0, 1], got {rho_env}")
    if rho_env in (0.0, 1.0):
        return float(rho_env)
    x = brentq(lambda m: rayleigh_envelope_correlation(m) - rho_env, 0.0, 1.0, xtol=1e-14)
    return math.sqrt(x)


def draw_correlated_fading(reference: np.ndarray, rho_env: float, rng) -> np.ndarray:
    """Fading with envelope correlation ``rho_env`` to ``reference`` entrywise."""
    rho_c = complex_correlation_for(rho_env)
    if rho_c == 1.0:
        return np.array(reference, dtype=complex, copy=True)
    reference = np.asarray(reference)
    fresh = (rng.standard_normal(reference.shape)
             + 1j * rng.standard_normal(reference.shape)) / math.sqrt(2.0)
    return rho_c * reference + math.sqrt(1.0 - rho_c**2) * fresh


def envelope_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Moment estimator of the envelope correlation between two samples."""
    ea, eb = np.abs(a).ravel(), np.abs(b).ravel()
    num = np.mean(ea * eb) - ea.mean() * eb.mean()
    den = math.sqrt((np.mean(ea**2) - ea.mean() ** 2) * (np.mean(eb**2) - eb.mean() ** 2))
    return float(num / den)


@dataclass
class ChannelMatrix:
    """Channel for a block of ``n_uses`` channel uses.

    ``gains[u] = large_scale * fading[u]``; ``noise_var[i]`` is the effective
    noise variance of row ``i`` (wireless noise scaled by the fibre plus the
    fibre's own noise).
    """

    large_scale: np.ndarray
    fading: np.ndarray
    noise_var: np.ndarray
    shadowing_db: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_r(self) -> int:
        return self.large_scale.shape[0]

    @property
    def n_t(self) -> int:
        return self.large_scale.shape[1]

    @property
    def gains(self) -> np.ndarray:
        return self.large_scale * self.fading

    def whitened(self) -> np.ndarray:
        return self.gains / np.sqrt(self.noise_var)[:, None]

    def mean_snr_db(self) -> np.ndarray:
        return 10 * np.log10(self.large_scale**2 / self.noise_var[:, None])

    def rows(self, idx) -> "ChannelMatrix":
        idx = np.asarray(idx)
        return ChannelMatrix(self.large_scale[idx], self.fading[..., idx, :], self.noise_var[idx],
                             None if self.shadowing_db is None else self.shadowing_db[idx],
                             dict(self.meta))

    def to_csv(self, use: int = 0) -> str:
        g = self.gains if self.gains.ndim == 2 else self.gains[use]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "k", "re", "im", "gain_db"])
        for i in range(g.shape[0]):
            for k in range(g.shape[1]):
                z = g[i, k]
                w.writerow([i, k, f"{z.real:.12g}", f"{z.imag:.12g}",
                            f"{20 * np.log10(max(abs(z), 1e-300)):.6f}"])
        return buf.getvalue()


def large_scale_gain(layout: ScenarioLayout, tx_powers_dbm, shadowing_db: np.ndarray,
                     params: LinkParams, transmitters: str = "ms") -> np.ndarray:
    d = np.maximum(layout.distances(transmitters), params.min_distance_km)
    p = np.broadcast_to(np.asarray(tx_powers_dbm, float), (d.shape[1],))
    snr_db = link_snr_db(p[None, :], d, shadowing_db, params)
    return 10 ** (snr_db / 20)


def draw_shadowing(layout: ScenarioLayout, rng, params: LinkParams, n_tx: Optional[int] = None) -> np.ndarray:
    """Lognormal shadowing in dB, one value per (site, transmitter), expanded to rows."""
    n_tx = layout.n_t if n_tx is None else n_tx
    sites = np.asarray(layout.ra_site)
    per_site = params.shadowing_std_db * rng.standard_normal((sites.max() + 1, n_tx))
    return per_site[sites]


def assemble_channel(layout: ScenarioLayout, tx_powers_dbm, rng, params: LinkParams = LinkParams(),
                     n_uses: Optional[int] = None, transmitters: str = "ms", backhaul: str = "fiber",
                     fading: Optional[np.ndarray] = None,
                     shadowing_db: Optional[np.ndarray] = None) -> ChannelMatrix:
    """Build H (``transmitters="ms"``) or H_R (``"mr"``) for one trial.

    ``backhaul="fiber"`` applies the scale chi and a fibre noise whose
    variance sits ``fiber_snr_db`` below the mean wireless signal power that
    row carries.  ``backhaul="wireless"`` (CoMP/CAS) leaves n_i = n_w.
    """
    n_t = layout.n_t
    if shadowing_db is None:
        shadowing_db = draw_shadowing(layout, rng, params, n_t)
    zeta = large_scale_gain(layout, tx_powers_dbm, shadowing_db, params, transmitters)
    if fading is None:
        fading = draw_fading(layout.n_r, n_t, rng, n_uses)
    if backhaul == "fiber":
        chi = params.fiber_scale
        g = chi * zeta
        noise = np.full(layout.n_r, chi**2)
        if params.fiber_snr_db is not None:
            noise = noise + chi**2 * np.sum(zeta**2, axis=1) / 10 ** (params.fiber_snr_db / 10)
    elif backhaul == "wireless":
        g = zeta
        noise = np.ones(layout.n_r)
    else:
        raise ValueError(f"unknown backhaul {backhaul!r}")
    return ChannelMatrix(g, fading, noise, shadowing_db,
                         {"transmitters": transmitters, "backhaul": backhaul})


def correlate_channel(reference: ChannelMatrix, independent: ChannelMatrix, rho_env: float,
                      params: LinkParams = LinkParams()) -> ChannelMatrix:
    """Composite entries ``rho_c H_ik + sqrt(1 - rho_c^2) G_ik``.

    ``independent`` carries the relays' own large-scale gains and fresh
    fading; at ``rho_env = 1`` the result equals ``reference`` and at 0 it
    equals ``independent``.  The fibre noise follows the mixed mean power.
    """
    rho_c = complex_correlation_for(rho_env)
    w = math.sqrt(1.0 - rho_c**2)
    gains = rho_c * reference.gains + w * independent.gains
    mix2 = rho_c**2 * reference.large_scale**2 + w**2 * independent.large_scale**2
    ls = np.sqrt(mix2)
    fading = gains / np.where(ls > 0, ls, 1.0)
    noise = rho_c**2 * reference.noise_var + w**2 * independent.noise_var
    return ChannelMatrix(ls, fading, noise, independent.shadowing_db,
                         {**independent.meta, "rho_env": rho_env})


def transmit(channel: ChannelMatrix, x: np.ndarray, rng) -> np.ndarray:
    """y = H x + n for symbols ``x`` of shape (n_uses, n_t)."""
    H = channel.gains
    y = np.einsum("...ik,...k->...i", H, x)
    n = (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)) / math.sqrt(2.0)
    return y + n * np.sqrt(channel.noise_var)

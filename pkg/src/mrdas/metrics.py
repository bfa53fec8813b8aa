"""BER/PER bookkeeping, Wilson intervals and effective throughput."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from .codec import PACKET_BITS

# relay forwarding and inter-BS exchange each occupy a second slot
TWO_SLOT_MODES = frozenset({"MR-FFR-DAS", "CoMP-CAS"})
# detectors that only use the first-slot observation at the home receiver
SINGLE_SLOT_DETECTORS = frozenset({"ML", "MMSE-OSIC", "PDA"})


def raw_throughput(n_t: int = 6, code_rate: float = 2 / 3, bits_per_symbol: int = 2,
                   symbol_rate: float = 15e3, n_subcarriers: int = 1200,
                   bandwidth_hz: float = 20e6) -> float:
    """Raw spectral efficiency in bit/s/Hz."""
    return n_t * code_rate * bits_per_symbol * symbol_rate * n_subcarriers / bandwidth_hz


def slot_factor(mode: str, two_slot_modes=TWO_SLOT_MODES, enabled: bool = True,
                detector: Optional[str] = None) -> float:
    """0.5 for cooperative reception in a two-slot mode, else 1.

    A non-cooperative detector run inside a two-slot mode (``PDA`` on the
    first slot alone) is the single-slot baseline and keeps the full rate.
    """
    if detector in SINGLE_SLOT_DETECTORS:
        return 1.0
    return 0.5 if enabled and mode in two_slot_modes else 1.0


def effective_throughput(ber, mode: str = "FFR-DAS", c_raw: float | None = None,
                         packet_bits: int = PACKET_BITS, slot_halving: bool = True,
                         two_slot_modes=TWO_SLOT_MODES, detector: Optional[str] = None):
    """``C_raw (1 - BER)^L_p``, halved for modes that need a second slot."""
    ber = np.asarray(ber, float)
    if np.any((ber < 0) | (ber > 1)):
        raise ValueError("BER must lie in [0, 1]")
    c = raw_throughput() if c_raw is None else c_raw
    out = c * (1.0 - ber) ** packet_bits * slot_factor(mode, two_slot_modes, slot_halving, detector)
    return float(out) if out.ndim == 0 else out


def wilson_interval(errors: int, total: int, confidence: float = 0.95):
    """Wilson score interval ``(low, high)``; ``None`` without data."""
    if total <= 0:
        return None
    z = norm.ppf(0.5 + confidence / 2)
    p = errors / total
    den = 1 + z * z / total
    centre = (p + z * z / (2 * total)) / den
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def wilson_ci(errors: int, total: int, confidence: float = 0.95):
    """Half-width of the Wilson interval (None without data)."""
    iv = wilson_interval(errors, total, confidence)
    return None if iv is None else 0.5 * (iv[1] - iv[0])


@dataclass
class MetricSeries:
    """Error counters for one scenario key."""

    key: dict = field(default_factory=dict)
    bit_errors: int = 0
    bits_total: int = 0
    packet_errors: int = 0
    packets_total: int = 0

    def add_frames(self, sent: np.ndarray, decoded: np.ndarray) -> "MetricSeries":
        """Count errors of packets (..., L_p); any wrong bit errs the packet."""
        err = np.asarray(sent) != np.asarray(decoded)
        err = err.reshape(-1, err.shape[-1])
        self.bit_errors += int(err.sum())
        self.bits_total += int(err.size)
        self.packet_errors += int(err.any(axis=1).sum())
        self.packets_total += int(err.shape[0])
        return self

    def merge(self, other: "MetricSeries") -> "MetricSeries":
        return MetricSeries(dict(self.key), self.bit_errors + other.bit_errors,
                            self.bits_total + other.bits_total,
                            self.packet_errors + other.packet_errors,
                            self.packets_total + other.packets_total)

    __add__ = merge

    @property
    def ber(self):
        return self.bit_errors / self.bits_total if self.bits_total else None

    @property
    def per(self):
        return self.packet_errors / self.packets_total if self.packets_total else None

    @property
    def ci95(self):
        return wilson_ci(self.bit_errors, self.bits_total)

    def ber_interval(self, confidence: float = 0.95):
        return wilson_interval(self.bit_errors, self.bits_total, confidence)

    def c_eff(self, mode: str | None = None, slot_halving: bool = True, c_raw: float | None = None):
        if self.ber is None:
            return None
        mode = self.key.get("mode", "FFR-DAS") if mode is None else mode
        return effective_throughput(self.ber, mode, c_raw, slot_halving=slot_halving)

    def done(self, min_bits: int, min_errors: int, max_bits: int) -> bool:
        """Stopping rule: at least ``min_bits`` and ``min_errors``, or ``max_bits``."""
        if self.bits_total >= max_bits:
            return True
        return self.bits_total >= min_bits and self.bit_errors >= min_errors

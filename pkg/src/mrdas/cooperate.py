"""Two-slot mobile-relay cooperation, multi-BS fusion and soft combining."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .channel import ChannelMatrix, transmit
from .codec import LLR_MAX
from .detect import DetectionProblem, SoftDecision, llrs_from_probs, pda

PROB_FLOOR = 1e-30


def combine_probabilities(p_ms: np.ndarray, p_mr: np.ndarray, floor: float = PROB_FLOOR) -> np.ndarray:
    """Renormalised product of two symbol-probability tables (..., M).

    Rows whose floored product vanishes fall back to ``p_ms``.
    """
    p_ms = np.asarray(p_ms, float)
    prod = np.maximum(p_ms, floor) * np.maximum(np.asarray(p_mr, float), floor)
    tot = prod.sum(-1, keepdims=True)
    bad = ~(tot > 0) | ~np.isfinite(tot)
    out = prod / np.where(bad, 1.0, tot)
    return np.where(bad, p_ms, out)


def combine_llrs(*llrs, clip: Optional[float] = LLR_MAX) -> np.ndarray:
    """Sum LLRs from several observations; clipping is applied once at the end."""
    if not llrs:
        raise ValueError("nothing to combine")
    shape = np.shape(llrs[0])
    if any(np.shape(l) != shape for l in llrs):
        raise ValueError("LLR arrays must have equal shapes")
    out = np.sum(llrs, axis=0)
    return out if clip is None else np.clip(out, -clip, clip)


@dataclass
class CooperationBundle:
    """Soft outputs of the constituent observations of one frame."""

    slot1_soft: SoftDecision
    slot2_soft: Sequence[SoftDecision] | SoftDecision
    mode: str

    def __post_init__(self):
        if self.mode not in ("MR_relay", "CoMP_3BS"):
            raise ValueError(f"unknown cooperation mode {self.mode!r}")
        parts = self.parts
        n = parts[0].symbol_probs.shape
        if any(p.symbol_probs.shape != n for p in parts):
            raise ValueError("constituent decisions cover different users or frames")
        if self.mode == "CoMP_3BS" and len(parts) != 3:
            raise ValueError("CoMP fusion needs exactly three BS decisions")

    @property
    def parts(self) -> list[SoftDecision]:
        rest = self.slot2_soft if isinstance(self.slot2_soft, (list, tuple)) else [self.slot2_soft]
        return [self.slot1_soft, *rest]

    def fused_llrs(self, clip: Optional[float] = LLR_MAX) -> np.ndarray:
        # constituent LLRs stay unclipped so that clipping happens once, here
        return combine_llrs(*[llrs_from_probs(p.symbol_probs, None) for p in self.parts], clip=clip)

    def fused_probs(self) -> np.ndarray:
        out = self.parts[0].symbol_probs
        for p in self.parts[1:]:
            out = combine_probabilities(out, p.symbol_probs)
        return out

    def fused(self, domain: str = "llr") -> SoftDecision:
        probs = self.fused_probs()
        if domain == "llr":
            return SoftDecision(self.fused_llrs(), probs)
        if domain == "prob":
            return SoftDecision(llrs_from_probs(probs), probs)
        raise ValueError(f"unknown combining domain {domain!r}")


def run_mr_relay_round(ch1: ChannelMatrix, ch2: ChannelMatrix, x_ms: np.ndarray, rng,
                       x_mr: Optional[np.ndarray] = None,
                       detector: Callable[[DetectionProblem], SoftDecision] = pda) -> CooperationBundle:
    """Two half-duplex slots: MSs transmit, then their MRs forward the same symbols.

    ``x_ms`` has shape (n_uses, N_t).  ``x_mr`` defaults to ``x_ms`` (perfect
    DF); pass re-encoded symbols from corrupted info bits to model relay
    decoding errors.
    """
    x_mr = x_ms if x_mr is None else x_mr
    y1 = transmit(ch1, x_ms, rng)
    y2 = transmit(ch2, x_mr, rng)
    s1 = detector(DetectionProblem.from_channel(ch1, y1))
    s2 = detector(DetectionProblem.from_channel(ch2, y2))
    return CooperationBundle(s1, s2, "MR_relay")


def run_comp_round(channel: ChannelMatrix, x: np.ndarray, rng, fusion: str = "sc_pda",
                   n_bs: int = 3, y: Optional[np.ndarray] = None,
                   detector: Callable[[DetectionProblem], SoftDecision] = pda):
    """Uplink over the stacked multi-BS channel (rows ordered BS by BS).

    ``sc_pda`` runs PDA per BS on its own rows and returns the
    :class:`CooperationBundle`; ``perfect_joint`` runs one detector on the
    whole stacked model and returns its :class:`SoftDecision`.
    """
    if y is None:
        y = transmit(channel, x, rng)
    if fusion == "perfect_joint":
        return detector(DetectionProblem.from_channel(channel, y))
    if fusion != "sc_pda":
        raise ValueError(f"unknown fusion {fusion!r}")
    if channel.n_r % n_bs:
        raise ValueError("rows do not split evenly across BSs")
    per = channel.n_r // n_bs
    parts = []
    for b in range(n_bs):
        idx = np.arange(b * per, (b + 1) * per)
        parts.append(detector(DetectionProblem.from_channel(channel.rows(idx), y[:, idx])))
    return CooperationBundle(parts[0], parts[1:], "CoMP_3BS")

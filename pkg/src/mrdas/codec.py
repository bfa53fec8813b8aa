"""Rate-2/3 punctured (171, 133) convolutional code, Gray QPSK, soft Viterbi.

LLR convention everywhere: ``L = log P(b=1) / P(b=0)``.
"""

from __future__ import annotations

import math

import numba
import numpy as np

GENERATORS = (0o171, 0o133)
CONSTRAINT_LENGTH = 7
N_STATES = 1 << (CONSTRAINT_LENGTH - 1)
TAIL = CONSTRAINT_LENGTH - 1
# rows: generator, columns: trellis step modulo the period
PUNCTURE = np.array([[1, 1], [1, 0]], dtype=bool)
PACKET_BITS = 1024
LLR_MAX = 20.0

QPSK_BITS = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.int8)
QPSK = ((1 - 2 * QPSK_BITS[:, 0]) + 1j * (1 - 2 * QPSK_BITS[:, 1])) / math.sqrt(2.0)
BITS_PER_SYMBOL = 2


def _taps(g: int) -> np.ndarray:
    return np.array([(g >> (CONSTRAINT_LENGTH - 1 - j)) & 1 for j in range(CONSTRAINT_LENGTH)],
                    dtype=np.int64)


def _trellis():
    """Output bits for every (state, input); state holds the last six inputs, newest in bit 5."""
    out = np.zeros((N_STATES, 2, 2), dtype=np.int8)
    nxt = np.zeros((N_STATES, 2), dtype=np.int64)
    for s in range(N_STATES):
        for u in (0, 1):
            reg = (u << (CONSTRAINT_LENGTH - 1)) | s
            for r, g in enumerate(GENERATORS):
                out[s, u, r] = bin(reg & g).count("1") & 1
            nxt[s, u] = (s >> 1) | (u << (CONSTRAINT_LENGTH - 2))
    return out, nxt


TRELLIS_OUT, TRELLIS_NEXT = _trellis()


def puncture_mask(n_steps: int) -> np.ndarray:
    """Flat keep-mask over the serial mother stream ``[g0_0, g1_0, g0_1, g1_1, ...]``."""
    period = PUNCTURE.shape[1]
    cols = np.arange(n_steps) % period
    return PUNCTURE[:, cols].T.reshape(-1)


def coded_length(n_info: int = PACKET_BITS) -> int:
    return int(puncture_mask(n_info + TAIL).sum())


def encode(info: np.ndarray, punctured: bool = True) -> np.ndarray:
    """Encode and terminate with six zero tail bits.

    ``info`` may be 1-D or (n_frames, n_info); output keeps the leading axes.
    """
    info = np.asarray(info, dtype=np.int64)
    lead = info.shape[:-1]
    flat = info.reshape(-1, info.shape[-1])
    n_steps = flat.shape[1] + TAIL
    mother = np.empty((flat.shape[0], n_steps, 2), dtype=np.int8)
    for r, g in enumerate(GENERATORS):
        taps = _taps(g)
        for f in range(flat.shape[0]):
            mother[f, :, r] = np.convolve(flat[f], taps)[:n_steps] & 1
    mother = mother.reshape(flat.shape[0], -1)
    if punctured:
        mother = mother[:, puncture_mask(n_steps)]
    return mother.reshape(lead + (mother.shape[-1],))


def depuncture(llrs: np.ndarray, n_info: int = PACKET_BITS) -> np.ndarray:
    """Reinsert zero LLRs at punctured positions; returns (..., n_steps, 2)."""
    llrs = np.asarray(llrs, dtype=float)
    n_steps = n_info + TAIL
    mask = puncture_mask(n_steps)
    if llrs.shape[-1] != mask.sum():
        raise ValueError(f"expected {mask.sum()} coded LLRs, got {llrs.shape[-1]}")
    full = np.zeros(llrs.shape[:-1] + (mask.size,))
    full[..., mask] = llrs
    return full.reshape(llrs.shape[:-1] + (n_steps, 2))


@numba.njit(cache=True)
def _viterbi_core(llr, out, n_info):
    n_frames, n_steps = llr.shape[0], llr.shape[1]
    n_states = out.shape[0]
    half = n_states >> 1
    decoded = np.zeros((n_frames, n_info), dtype=np.int8)
    survivors = np.zeros((n_steps, n_states), dtype=np.int8)
    metric = np.empty(n_states)
    new = np.empty(n_states)
    for f in range(n_frames):
        metric[:] = -1e300
        metric[0] = 0.0
        for t in range(n_steps):
            l0 = llr[f, t, 0]
            l1 = llr[f, t, 1]
            best = -1e300
            for s in range(n_states):
                u = s // half
                base = (s << 1) & (n_states - 1)
                p0 = base
                p1 = base | 1
                m0 = metric[p0] + out[p0, u, 0] * l0 + out[p0, u, 1] * l1
                m1 = metric[p1] + out[p1, u, 0] * l0 + out[p1, u, 1] * l1
                # ties resolve towards the lower predecessor
                if m1 > m0:
                    new[s] = m1
                    survivors[t, s] = 1
                else:
                    new[s] = m0
                    survivors[t, s] = 0
                if new[s] > best:
                    best = new[s]
            for s in range(n_states):
                metric[s] = new[s] - best
        s = 0
        for t in range(n_steps - 1, -1, -1):
            u = s // half
            if t < n_info:
                decoded[f, t] = u
            s = ((s << 1) & (n_states - 1)) | survivors[t, s]
    return decoded


def viterbi_decode(llrs: np.ndarray, n_info: int = PACKET_BITS, depunctured: bool = False) -> np.ndarray:
    """Soft-input Viterbi over the 64-state trellis, traceback from state 0.

    ``llrs`` are punctured coded-bit LLRs (..., coded_length) unless
    ``depunctured`` is set, in which case the shape is (..., n_steps, 2).
    """
    llrs = np.asarray(llrs, dtype=float)
    full = llrs if depunctured else depuncture(llrs, n_info)
    if full.shape[-2:] != (n_info + TAIL, 2):
        raise ValueError(f"LLR block has shape {full.shape}, expected (..., {n_info + TAIL}, 2)")
    lead = full.shape[:-2]
    flat = np.ascontiguousarray(full.reshape((-1,) + full.shape[-2:]))
    bits = _viterbi_core(flat, TRELLIS_OUT, n_info)
    return bits.reshape(lead + (n_info,))


def map_gray_qpsk(bits: np.ndarray) -> np.ndarray:
    """Pairs ``(b0, b1)`` -> ``((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)``."""
    bits = np.asarray(bits)
    if bits.shape[-1] % 2:
        raise ValueError("QPSK mapping needs an even number of bits")
    pairs = bits.reshape(bits.shape[:-1] + (-1, 2)).astype(np.int64)
    return QPSK[2 * pairs[..., 0] + pairs[..., 1]]


def symbol_index(bits: np.ndarray) -> np.ndarray:
    pairs = np.asarray(bits).reshape(np.shape(bits)[:-1] + (-1, 2)).astype(np.int64)
    return 2 * pairs[..., 0] + pairs[..., 1]


def slice_qpsk(z: np.ndarray) -> np.ndarray:
    """Nearest constellation index for each sample."""
    z = np.asarray(z)
    return 2 * (z.real < 0) + (z.imag < 0)


def hard_llrs(indices: np.ndarray, magnitude: float = LLR_MAX) -> np.ndarray:
    """±magnitude LLRs for hard symbol decisions, shape (..., 2)."""
    b = QPSK_BITS[np.asarray(indices)]
    return magnitude * (2.0 * b - 1.0)


def pad_to_symbols(coded: np.ndarray) -> np.ndarray:
    """Append one zero bit when the coded length is odd."""
    coded = np.asarray(coded)
    if coded.shape[-1] % 2 == 0:
        return coded
    pad = np.zeros(coded.shape[:-1] + (1,), dtype=coded.dtype)
    return np.concatenate([coded, pad], axis=-1)


def random_info(rng, n_frames: int, n_info: int = PACKET_BITS) -> np.ndarray:
    return rng.integers(0, 2, size=(n_frames, n_info), dtype=np.int8)

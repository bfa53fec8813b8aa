"""Multiuser detectors for y = Hx + n with QPSK users.

All detectors work on a batch of channel uses: ``y`` has shape (B, N_r) and
``H`` has shape (B, N_r, N_t) (a single (N_r, N_t) matrix is broadcast).
Noise is white with variance ``noise_var``; use :meth:`DetectionProblem.from_channel`
to whiten rows with unequal noise first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .codec import LLR_MAX, QPSK, QPSK_BITS, hard_llrs, slice_qpsk

PDA_TOL = 1e-4
PDA_MAX_SWEEPS = 10
COND_LIMIT = 1e12
PROB_FLOOR = 1e-300


@dataclass
class DetectionProblem:
    y: np.ndarray
    H: np.ndarray
    noise_var: float = 1.0

    def __post_init__(self):
        self.y = np.atleast_2d(np.asarray(self.y, dtype=complex))
        H = np.asarray(self.H, dtype=complex)
        if H.ndim == 2:
            H = np.broadcast_to(H, (self.y.shape[0],) + H.shape)
        if H.shape[:2] != self.y.shape:
            raise ValueError(f"H {H.shape} does not match y {self.y.shape}")
        if not self.noise_var > 0:
            raise ValueError("noise variance must be positive")
        self.H = np.ascontiguousarray(H)

    @property
    def n_t(self) -> int:
        return self.H.shape[2]

    @property
    def n_r(self) -> int:
        return self.H.shape[1]

    @classmethod
    def from_channel(cls, channel, y) -> "DetectionProblem":
        """Whiten each receive row by its effective noise standard deviation."""
        s = np.sqrt(channel.noise_var)
        H = channel.gains / s[:, None]
        if H.ndim == 2:
            H = np.broadcast_to(H, (np.shape(y)[0],) + H.shape)
        return cls(np.asarray(y) / s, H, 1.0)


@dataclass
class SoftDecision:
    bit_llrs: np.ndarray
    symbol_probs: np.ndarray
    iterations_used: Optional[np.ndarray] = None
    converged: Optional[np.ndarray] = None

    @property
    def hard(self) -> np.ndarray:
        return np.argmax(self.symbol_probs, axis=-1)

    def bits(self) -> np.ndarray:
        return (self.bit_llrs > 0).astype(np.int8)


def llrs_from_probs(probs: np.ndarray, clip: Optional[float] = LLR_MAX) -> np.ndarray:
    """Bit LLRs from symbol probabilities, (..., 4) -> (..., 2)."""
    p = np.maximum(probs, PROB_FLOOR)
    out = np.empty(p.shape[:-1] + (2,))
    for n in range(2):
        one = QPSK_BITS[:, n] == 1
        out[..., n] = np.log(p[..., one].sum(-1)) - np.log(p[..., ~one].sum(-1))
    return out if clip is None else np.clip(out, -clip, clip)


@numba.njit(cache=True)
def _ml_core(y, H, noise_var, points, labels, exact):
    B, n_r, n_t = H.shape
    M = points.shape[0]
    n_hyp = M**n_t
    llr = np.empty((B, n_t, 2))
    probs = np.empty((B, n_t, M))
    smin = np.empty((n_t, M))
    psum = np.empty((n_t, M))
    res = np.empty((n_t + 1, n_r), dtype=np.complex128)
    digits = np.zeros(n_t, dtype=np.int64)
    for b in range(B):
        for i in range(n_r):
            res[0, i] = y[b, i]
        digits[:] = 0
        smin[:, :] = np.inf
        psum[:, :] = 0.0
        ref = np.inf  # running minimum metric; psum holds sum exp(ref - d)
        start = 0
        for h in range(n_hyp):
            for lvl in range(start, n_t):
                a = points[digits[lvl]]
                for i in range(n_r):
                    res[lvl + 1, i] = res[lvl, i] - H[b, i, lvl] * a
            d = 0.0
            for i in range(n_r):
                z = res[n_t, i]
                d += z.real * z.real + z.imag * z.imag
            d /= noise_var
            for k in range(n_t):
                if d < smin[k, digits[k]]:
                    smin[k, digits[k]] = d
            if d < ref:
                f = math.exp(d - ref) if ref < np.inf else 0.0
                for k in range(n_t):
                    for m in range(M):
                        psum[k, m] *= f
                ref = d
            if d - ref < 60.0:
                e = math.exp(ref - d)
                for k in range(n_t):
                    psum[k, digits[k]] += e
            # odometer: last user changes fastest
            p = n_t - 1
            while p >= 0:
                digits[p] += 1
                if digits[p] < M:
                    break
                digits[p] = 0
                p -= 1
            start = max(p, 0)
        for k in range(n_t):
            tot = 0.0
            for m in range(M):
                tot += psum[k, m]
            for m in range(M):
                probs[b, k, m] = psum[k, m] / tot
            for n in range(2):
                mins = np.full(2, np.inf)
                sums = np.zeros(2)
                for m in range(M):
                    bit = labels[m, n]
                    sums[bit] += psum[k, m]
                    if smin[k, m] < mins[bit]:
                        mins[bit] = smin[k, m]
                if exact and sums[0] > 0 and sums[1] > 0:
                    llr[b, k, n] = math.log(sums[1]) - math.log(sums[0])
                else:
                    llr[b, k, n] = mins[0] - mins[1]
    return llr, probs


def ml_soft(problem: DetectionProblem, exact: bool = False,
            clip: Optional[float] = LLR_MAX) -> SoftDecision:
    """Soft ML detection by exhaustive search over all 4**N_t hypotheses.

    ``exact=False`` gives the max-log LLR
    ``(min_{b=0} ||y-Hx||^2 - min_{b=1} ||y-Hx||^2) / sigma^2``;
    ``exact=True`` gives the log-sum-exp form.  Symbol probabilities are the
    exact marginal posteriors under a uniform prior in both cases.
    """
    if problem.n_t > 8:
        raise ValueError("exhaustive ML limited to 8 users")
    llr, probs = _ml_core(problem.y, problem.H, float(problem.noise_var),
                          QPSK, QPSK_BITS.astype(np.int64), exact)
    if clip is not None:
        llr = np.clip(llr, -clip, clip)
    return SoftDecision(llr, probs)


def mmse_osic(problem: DetectionProblem, llr_magnitude: float = LLR_MAX) -> SoftDecision:
    """MMSE detection with ordered successive interference cancellation.

    At each stage the not-yet-detected user with the largest post-MMSE SINR
    is sliced, its regenerated contribution is subtracted from ``y`` and its
    column is removed.  Output is hard: one-hot probabilities and ±LLR.
    """
    y = problem.y.copy()
    H = problem.H
    B, n_r, n_t = H.shape
    if n_r < n_t:
        raise ValueError("MMSE-OSIC needs N_r >= N_t")
    s2 = problem.noise_var
    ridge = s2 + 1e-12 * np.real(np.einsum("bij,bij->b", H.conj(), H)) / n_t
    active = np.ones((B, n_t), dtype=bool)
    decided = np.zeros((B, n_t), dtype=np.int64)
    rows = np.arange(B)
    eye = np.eye(n_t)
    for _ in range(n_t):
        He = H * active[:, None, :]
        G = np.einsum("bik,bil->bkl", He.conj(), He) + ridge[:, None, None] * eye
        Ginv = np.linalg.inv(G)
        mse = ridge[:, None] * np.real(np.einsum("bkk->bk", Ginv))
        mse[~active] = np.inf
        k = np.argmin(mse, axis=1)
        w = np.einsum("bl,bil->bi", Ginv[rows, k, :], He.conj())
        est = np.einsum("bi,bi->b", w, y)
        m = slice_qpsk(est)
        decided[rows, k] = m
        y -= H[rows, :, k] * QPSK[m][:, None]
        active[rows, k] = False
    probs = np.zeros((B, n_t, len(QPSK)))
    np.put_along_axis(probs, decided[..., None], 1.0, axis=-1)
    return SoftDecision(hard_llrs(decided, llr_magnitude), probs)


@numba.njit(cache=True)
def _cholesky_inplace(a):
    """Lower Cholesky factor written over ``a``; False if not positive definite."""
    n = a.shape[0]
    for j in range(n):
        d = a[j, j]
        for k in range(j):
            d -= a[j, k] * a[j, k]
        if not d > 0.0:
            return False
        d = math.sqrt(d)
        a[j, j] = d
        for i in range(j + 1, n):
            v = a[i, j]
            for k in range(j):
                v -= a[i, k] * a[j, k]
            a[i, j] = v / d
    return True


@numba.njit(cache=True)
def _moments(P, j, points, mean, var, pvar):
    """Mean, variance and pseudo-variance of user ``j`` under probabilities ``P[j]``."""
    e = 0j
    for m in range(points.shape[0]):
        e += points[m] * P[j, m]
    c = 0.0
    ct = 0j
    for m in range(points.shape[0]):
        d = points[m] - e
        c += (d.real * d.real + d.imag * d.imag) * P[j, m]
        ct += d * d * P[j, m]
    mean[j] = e
    var[j] = c
    pvar[j] = ct


@numba.njit(cache=True)
def _pda_core(y, H, noise_var, points, tol, max_sweeps, cond_limit, trace, want_trace):
    B, n_r, n_t = H.shape
    M = points.shape[0]
    probs = np.empty((B, n_t, M))
    iters = np.zeros(B, dtype=np.int64)
    conv = np.zeros(B, dtype=np.bool_)
    mean = np.empty(n_t, dtype=np.complex128)
    var = np.empty(n_t)
    pvar = np.empty(n_t, dtype=np.complex128)
    lam = np.empty((2 * n_t, 2 * n_t))
    lam0 = np.empty((2 * n_t, 2 * n_t))
    rhs = np.empty((2 * n_t, M))
    logphi = np.empty(M)
    for b in range(B):
        Hb = H[b]
        G = Hb.conj().T @ Hb
        ev = np.linalg.eigvalsh(G)
        if ev[0] <= 0.0 or ev[-1] / ev[0] > cond_limit:
            eps = 1e-10 * np.real(np.trace(G)) / n_t
            for i in range(n_t):
                G[i, i] += eps
        Ginv = np.linalg.inv(G)
        Ginv = 0.5 * (Ginv + Ginv.conj().T)
        ybar = Ginv @ (Hb.conj().T @ y[b])
        cn = noise_var * Ginv
        P = probs[b]
        P[:, :] = 1.0 / M
        if want_trace:
            trace[b, 0] = P
        for j in range(n_t):
            _moments(P, j, points, mean, var, pvar)
        for sweep in range(max_sweeps):
            delta = 0.0
            for k in range(n_t):
                # composite real covariance of v_k, doubled
                for i in range(n_t):
                    for j in range(n_t):
                        c = cn[i, j]
                        ct = 0j
                        if i == j and i != k:
                            c += var[i]
                            ct = pvar[i]
                        lam[i, j] = (c + ct).real
                        lam[n_t + i, j] = (c + ct).imag
                        lam[i, n_t + j] = -(c - ct).imag
                        lam[n_t + i, n_t + j] = (c - ct).real
                for m in range(M):
                    for i in range(n_t):
                        w = ybar[i]
                        if i == k:
                            w -= points[m]
                        else:
                            w -= mean[i]
                        rhs[i, m] = w.real
                        rhs[n_t + i, m] = w.imag
                # q_m = r_m^T lam^-1 r_m = |L^-1 r_m|^2 with lam = L L^T
                lam0[:, :] = lam
                if _cholesky_inplace(lam):
                    for m in range(M):
                        q = 0.0
                        for i in range(2 * n_t):
                            w = rhs[i, m]
                            for j in range(i):
                                w -= lam[i, j] * rhs[j, m]
                            w /= lam[i, i]
                            rhs[i, m] = w
                            q += w * w
                        logphi[m] = -q
                else:
                    z = np.linalg.solve(lam0, rhs)
                    for m in range(M):
                        q = 0.0
                        for i in range(2 * n_t):
                            q += rhs[i, m] * z[i, m]
                        logphi[m] = -q
                top = logphi.max()
                tot = 0.0
                for m in range(M):
                    logphi[m] = math.exp(logphi[m] - top)
                    tot += logphi[m]
                for m in range(M):
                    p = logphi[m] / tot
                    dd = abs(p - P[k, m])
                    if dd > delta:
                        delta = dd
                    P[k, m] = p
                _moments(P, k, points, mean, var, pvar)
            iters[b] = sweep + 1
            if want_trace:
                trace[b, sweep + 1] = P
            if delta < tol:
                conv[b] = True
                break
    return probs, iters, conv


def pda(problem: DetectionProblem, tol: float = PDA_TOL, max_sweeps: int = PDA_MAX_SWEEPS,
        clip: Optional[float] = LLR_MAX, trace: bool = False):
    """Probabilistic data association on the decorrelated model.

    The decorrelated observation ``(H^H H)^-1 H^H y`` carries colored noise
    ``N0 (H^H H)^-1``.  For each user the interference-plus-noise term is
    matched by a single improper Gaussian (mean, covariance and
    pseudocovariance from the other users' current symbol probabilities);
    users are swept serially with the freshest moments until no probability
    moves by more than ``tol`` or ``max_sweeps`` is reached.

    With ``trace=True`` a second value is returned: probabilities after every
    sweep, shape (B, max_sweeps + 1, N_t, M), NaN past convergence.
    """
    B, _, n_t = problem.H.shape
    buf = (np.full((B, max_sweeps + 1, n_t, len(QPSK)), np.nan) if trace
           else np.empty((1, 1, 1, 1)))
    probs, iters, conv = _pda_core(problem.y, problem.H, float(problem.noise_var), QPSK,
                                   tol, max_sweeps, COND_LIMIT, buf, trace)
    out = SoftDecision(llrs_from_probs(probs, clip), probs, iters, conv)
    return (out, buf) if trace else out


def trace_to_csv(trace: np.ndarray, use: int = 0) -> str:
    """CSV dump ``sweep,user,symbol,prob`` of one problem's PDA iterations."""
    lines = ["sweep,user,symbol,prob"]
    t = trace[use]
    for s in range(t.shape[0]):
        if np.isnan(t[s]).all():
            break
        for k in range(t.shape[1]):
            for m in range(t.shape[2]):
                lines.append(f"{s},{k},{m},{t[s, k, m]:.12g}")
    return "\n".join(lines) + "\n"


DETECTORS = {"ML": ml_soft, "MMSE-OSIC": mmse_osic, "PDA": pda}


def detect(name: str, problem: DetectionProblem) -> SoftDecision:
    try:
        fn = DETECTORS[name]
    except KeyError:
        raise ValueError(f"unknown detector {name!r}") from None
    return fn(problem)

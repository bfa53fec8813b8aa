import math

import numpy as np
import pytest

from conftest import cn
from mrdas.codec import QPSK, QPSK_BITS
from mrdas.detect import (DetectionProblem, _pda_core, llrs_from_probs, ml_soft, mmse_osic, pda,
                          trace_to_csv)
from oracles import exact_llrs, exact_marginals, maxlog_llrs


def _instances(rng, n, nt, snr_db=10.0, nr=None):
    nr = nt if nr is None else nr
    H = cn(rng, n, nr, nt)
    x = QPSK[rng.integers(0, 4, (n, nt))]
    s2 = 10 ** (-snr_db / 10)
    y = np.einsum("bij,bj->bi", H, x) + math.sqrt(s2) * cn(rng, n, nr)
    return DetectionProblem(y, H, s2), x


def test_problem_validation():
    with pytest.raises(ValueError):
        DetectionProblem(np.zeros((2, 3)), np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        DetectionProblem(np.zeros((1, 2)), np.eye(2), 0.0)


def test_ml_noiseless_scalar():
    for m in range(4):
        r = ml_soft(DetectionProblem([[QPSK[m]]], [[1.0]], 1.0))
        assert np.array_equal(r.bits()[0, 0], QPSK_BITS[m])


def test_ml_zero_observation_symmetric(rng):
    H = cn(rng, 3, 3)
    r = ml_soft(DetectionProblem(np.zeros((1, 3)), H, 1.0), clip=None)
    assert np.allclose(r.bit_llrs, 0.0, atol=1e-9)


def test_ml_matches_oracle_small(rng):
    p, _ = _instances(rng, 50, 2, snr_db=5)
    r = ml_soft(p, clip=None)
    e = ml_soft(p, exact=True, clip=None)
    for b in range(50):
        assert np.allclose(r.bit_llrs[b], maxlog_llrs(p.y[b], p.H[b], p.noise_var), rtol=1e-9, atol=1e-12)
        assert np.allclose(e.bit_llrs[b], exact_llrs(p.y[b], p.H[b], p.noise_var), rtol=1e-9, atol=1e-12)
        assert np.allclose(r.symbol_probs[b], exact_marginals(p.y[b], p.H[b], p.noise_var), atol=1e-12)
    # Jacobian-logarithm bound between the two forms
    assert np.max(np.abs(r.bit_llrs - e.bit_llrs)) <= math.log(4**2 / 2) + 1e-12


def test_soft_decision_invariants(rng):
    p, _ = _instances(rng, 200, 3, snr_db=0)
    for r in (ml_soft(p), pda(p), mmse_osic(p)):
        assert np.allclose(r.symbol_probs.sum(-1), 1.0, atol=1e-9)
        assert r.symbol_probs.min() >= 0 and r.symbol_probs.max() <= 1
        assert np.all(np.abs(r.bit_llrs) <= 20.0)


def test_mmse_osic_orthogonal_noiseless(rng):
    Q, _ = np.linalg.qr(cn(rng, 4, 4))
    idx = rng.integers(0, 4, (1, 4))
    p = DetectionProblem(Q @ QPSK[idx[0]], Q, 1e-12)
    assert np.array_equal(mmse_osic(p).hard, idx)


def test_mmse_osic_scalar(rng):
    h = cn(rng, 100, 1, 1)
    idx = rng.integers(0, 4, (100, 1))
    y = h[:, :, 0] * QPSK[idx] + 0.05 * cn(rng, 100, 1)
    p = DetectionProblem(y, h, 0.005)
    z = (np.conj(h[:, 0, 0]) * y[:, 0]) / (np.abs(h[:, 0, 0]) ** 2 + 0.005)
    expect = 2 * (z.real < 0) + (z.imag < 0)
    assert np.array_equal(mmse_osic(p).hard[:, 0], expect)


def test_mmse_osic_not_better_than_ml(rng):
    p, x = _instances(rng, 100_000, 2, snr_db=10)
    ber = {}
    for name, fn in (("ml", ml_soft), ("osic", mmse_osic)):
        sent = QPSK_BITS[np.argmin(np.abs(x[..., None] - QPSK), -1)]
        ber[name] = np.mean(fn(p).bits() != sent)
    assert ber["osic"] >= ber["ml"]


def test_pda_identity_noiseless(rng):
    idx = rng.integers(0, 4, (5, 3))
    p = DetectionProblem(QPSK[idx], np.eye(3), 1e-9)
    r, tr = pda(p, trace=True)
    assert np.array_equal(r.hard, idx)
    assert np.allclose(tr[:, 1].max(-1), 1.0)
    assert r.converged.all()


def test_pda_uniform_pseudocovariance():
    assert abs(np.sum(QPSK**2) / 4) < 1e-15
    assert abs(np.mean(QPSK)) < 1e-15


def test_pda_fixed_point(rng):
    p, _ = _instances(rng, 300, 4, snr_db=8)
    r = pda(p, clip=None)
    ok = r.converged
    # one more sweep from the converged probabilities barely moves them
    tr = pda(p, max_sweeps=r.iterations_used.max() + 1, trace=True, clip=None)[1]
    for b in np.flatnonzero(ok):
        s = r.iterations_used[b]
        assert np.max(np.abs(tr[b, s] - tr[b, s - 1])) < 1e-4


def test_pda_close_to_exact(rng):
    p, _ = _instances(rng, 2000, 2, snr_db=10)
    r = pda(p)
    tv = [0.5 * np.abs(r.symbol_probs[b] - exact_marginals(p.y[b], p.H[b], p.noise_var)).sum(-1).mean()
          for b in range(2000)]
    assert np.mean(tv) < 0.1


def test_decorrelated_noise_covariance(rng):
    H = cn(rng, 3, 3)
    x = QPSK[rng.integers(0, 4, 3)]
    n = 100_000
    s2 = 0.3
    y = (H @ x)[None] + math.sqrt(s2) * cn(rng, n, 3)
    G = H.conj().T @ H
    ybar = np.linalg.solve(G, (H.conj().T @ y.T)).T
    e = ybar - x
    C = e.T @ e.conj() / n
    ref = s2 * np.linalg.inv(G)
    assert np.linalg.norm(C - ref) / np.linalg.norm(ref) < 0.05


def test_pda_regularises_singular():
    H = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]], complex)
    r = pda(DetectionProblem([[0.5, 0.5]], H, 0.1))
    assert np.all(np.isfinite(r.bit_llrs))


def test_llrs_from_probs_signs():
    P = np.eye(4)[None]
    L = llrs_from_probs(P)
    assert np.array_equal((L > 0).astype(int)[0], QPSK_BITS)


def test_trace_csv(rng):
    p, _ = _instances(rng, 2, 2)
    _, tr = pda(p, trace=True)
    text = trace_to_csv(tr, 0)
    assert text.startswith("sweep,user,symbol,prob\n")

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrdas import codec
from oracles import ALPHABET, conv_encode_reference


def test_all_zero():
    assert not codec.encode(np.zeros(1024, int)).any()


def test_coded_length():
    assert codec.coded_length(1024) == 1545
    assert codec.encode(np.zeros(1024, int)).shape == (1545,)


def test_mother_code_matches_shift_register(rng):
    bits = rng.integers(0, 2, 200)
    assert np.array_equal(codec.encode(bits, punctured=False), conv_encode_reference(bits))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_linearity(seed):
    r = np.random.default_rng(seed)
    a, b = r.integers(0, 2, (2, 64))
    assert np.array_equal(codec.encode(a ^ b), codec.encode(a) ^ codec.encode(b))


def test_gray_mapping():
    for (b0, b1), s in ALPHABET.items():
        assert codec.map_gray_qpsk(np.array([b0, b1]))[0] == pytest.approx(s)
    assert codec.map_gray_qpsk(np.array([0, 0]))[0] == pytest.approx((1 + 1j) / math.sqrt(2))
    assert np.mean(np.abs(codec.QPSK) ** 2) == pytest.approx(1.0)
    # neighbours (distance sqrt 2) differ in one bit
    for i in range(4):
        for j in range(4):
            if abs(abs(codec.QPSK[i] - codec.QPSK[j]) - math.sqrt(2)) < 1e-12:
                assert np.sum(codec.QPSK_BITS[i] != codec.QPSK_BITS[j]) == 1
    with pytest.raises(ValueError):
        codec.map_gray_qpsk(np.array([1, 0, 1]))


def test_slice_inverts_mapping(rng):
    idx = rng.integers(0, 4, 1000)
    assert np.array_equal(codec.slice_qpsk(codec.QPSK[idx]), idx)


def test_noiseless_roundtrip(rng):
    info = codec.random_info(rng, 1000)
    coded = codec.encode(info)
    llr = 10.0 * (2.0 * coded - 1.0)
    assert np.array_equal(codec.viterbi_decode(llr), info)


def test_depuncture_shape():
    full = codec.depuncture(np.ones(1545))
    assert full.shape == (1030, 2) and full.sum() == 1545
    with pytest.raises(ValueError):
        codec.depuncture(np.ones(1544))


def test_zero_llrs_decode_to_zero():
    assert not codec.viterbi_decode(np.zeros(1545)).any()


def test_pad_to_symbols():
    assert codec.pad_to_symbols(np.ones(1545, np.int8)).shape == (1546,)
    assert codec.pad_to_symbols(np.ones(4, np.int8)).shape == (4,)

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sideinfo.binning import (CodeTooLarge, DecFail, EncFail, TypicalityParams, build_channel_code,
                              build_source_code, channel_decode, channel_encode, is_typical,
                              simulate, source_decode, source_encode_detail)
from sideinfo.capacity import solve_capacity
from sideinfo.prob import Alphabet, JointDist
from sideinfo.problems import binary_wyner_ziv, noiseless_binary
from sideinfo.ratedist import solve_rd_point

A, B = Alphabet("a", 2), Alphabet("b", 2)
EPS = TypicalityParams(0.1)


@pytest.fixture(scope="module")
def noiseless():
    p = noiseless_binary()
    return p, solve_capacity(p, 2)


@pytest.fixture(scope="module")
def wz():
    s = binary_wyner_ziv()
    return s, solve_rd_point(s, 0.1, 2)


def test_typicality_rules():
    ref = JointDist((A, B), [[0.5, 0.0], [0.0, 0.5]])
    assert is_typical([[0, 1, 0, 1], [0, 1, 0, 1]], ref, EPS)
    # a zero-probability pair is never typical
    assert not is_typical([[0, 1, 0, 1], [1, 1, 0, 1]], ref, TypicalityParams(0.9))
    # frequency 0.75 vs 0.5 is outside epsilon 0.1
    assert not is_typical([[0, 0, 0, 1], [0, 0, 0, 1]], ref, EPS)
    with pytest.raises(ValueError):
        is_typical([[0, 1], [0]], ref, EPS)
    with pytest.raises(ValueError):
        TypicalityParams(0.0)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=30))
def test_typicality_matches_definition(seq):
    ref = JointDist((A,), [0.3, 0.7])
    freq = np.bincount(seq, minlength=2) / len(seq)
    want = bool(np.all(np.abs(freq - [0.3, 0.7]) <= 0.1 + 1e-12))
    assert is_typical([seq], ref, EPS) == want


def test_channel_code_sizes_and_roundtrip(noiseless):
    p, pt = noiseless
    code = build_channel_code(p, 0.5, pt, 8, EPS, seed=3)
    # I(U;Y,S2) = 1 bit here
    assert code.num_codewords == int(2 ** (8 * (1 - 0.2)))
    assert code.num_bins == int(2 ** (8 * (0.5 - 0.4)))
    m = int(code.bin_of[0])
    x = channel_encode(code, m, np.zeros(8, dtype=int))
    if not isinstance(x, EncFail):
        got = channel_decode(code, x, np.zeros(8, dtype=int), EPS)
        assert isinstance(got, DecFail) or got == m
    with pytest.raises(ValueError):
        channel_encode(code, code.num_bins, np.zeros(8, dtype=int))


def test_code_is_seeded(noiseless):
    p, pt = noiseless
    a = build_channel_code(p, 0.5, pt, 8, EPS, seed=11)
    b = build_channel_code(p, 0.5, pt, 8, EPS, seed=11)
    np.testing.assert_array_equal(a.codewords, b.codewords)
    np.testing.assert_array_equal(a.bin_of, b.bin_of)


def test_memory_guard(noiseless):
    p, pt = noiseless
    with pytest.raises(CodeTooLarge):
        build_channel_code(p, 0.5, pt, 40, EPS, max_symbols=1000)


def test_source_decode_fallback(wz):
    s, pt = wz
    code = build_source_code(s, pt, 8, EPS, seed=1)
    rec = source_decode(code, 0, np.zeros(8, dtype=int), EPS)
    assert rec.xhat.shape == (8,)
    if rec.fallback:
        assert np.all(rec.xhat == 0) and rec.reason in ("none", "ambiguous")
    b, found = source_encode_detail(code, np.zeros(8, dtype=int), np.zeros(8, dtype=int), EPS)
    assert 0 <= b < code.num_bins


@pytest.mark.parametrize("kind", ["channel", "source"])
def test_simulation_counts_and_determinism(kind, noiseless, wz):
    if kind == "channel":
        p, pt = noiseless
        arg = 0.5
    else:
        p, pt = wz
        arg = 0.1
    a = simulate(kind, p, pt, [4, 8], arg, 50, EPS, seed=2)
    b = simulate(kind, p, pt, [4, 8], arg, 50, EPS, seed=2)
    for ra, rb in zip(a, b):
        assert sum(ra.failures.values()) == ra.failure_count
        assert set(ra.failures) == {"E1", "E2", "E3"}
        assert ra.metric == rb.metric and ra.failures == rb.failures
        assert ra.half_width >= 0


def test_single_trial_report(noiseless):
    p, pt = noiseless
    (r,) = simulate("channel", p, pt, [4], 0.5, 1, EPS, seed=0)
    assert r.trials == 1 and r.half_width == 0.0

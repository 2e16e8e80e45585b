import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvqkd.links import LoopbackLink
from cvqkd.privacy import (
    ConfirmResponder,
    SecretKey,
    compress,
    confirm,
    key_tag,
    secret_length,
    seed_length,
)
from cvqkd.reconciliation import LeakageLedger
from oracles import toeplitz_hash


def _bits(hexstr, n=None):
    out = np.unpackbits(np.frombuffer(bytes.fromhex(hexstr), np.uint8))
    return out if n is None else out[:n]


def test_golden_all_ones_seed():
    # 64 ones under an all-ones Toeplitz matrix: every output bit is an even parity
    bits = _bits("aa" * 16)
    out = compress(bits, np.ones(seed_length(128, 32), np.uint8), 32)
    assert out.length == 32 and not out.bits.any()


def test_golden_random_seed():
    bits = _bits("43c887987c2b8c0a")
    seed = _bits("6414279106ab8b6b8d0a", 79)
    out = compress(bits, seed, 16)
    assert "".join(map(str, out.bits)) == "1110011101001010"
    np.testing.assert_array_equal(out.bits, toeplitz_hash(bits, seed, 16))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 120), frac=st.floats(0, 1), seed=st.integers(0, 2**32 - 1))
def test_matches_dense_oracle(n, frac, seed):
    rng = np.random.default_rng(seed)
    ell = int(frac * n)
    bits = rng.integers(0, 2, n)
    s = rng.integers(0, 2, seed_length(n, ell))
    out = compress(bits, s, ell)
    assert out.length == ell
    if ell:
        np.testing.assert_array_equal(out.bits, toeplitz_hash(bits, s, ell))


def test_large_input_exact():
    # FFT rounding must stay exact at session sizes
    rng = np.random.default_rng(0)
    n, ell = 190_000, 300
    bits, s = rng.integers(0, 2, n), rng.integers(0, 2, n + ell - 1)
    out = compress(bits, s, ell)
    # spot-check rows against direct dot products
    for i in (0, 7, ell - 1):
        row = s[i + n - 1 - np.arange(n)]
        assert out.bits[i] == int(row @ bits) % 2


def test_compress_errors():
    with pytest.raises(ValueError):
        compress(np.ones(8), np.ones(4), 9)
    with pytest.raises(ValueError):
        compress(np.ones(8), np.ones(4), 4)
    assert compress(np.ones(8), [], 0).length == 0


def test_secret_length():
    led = LeakageLedger(1000, [1000, 200])
    # 5 * 1000 - 1200 - 1000 * 1.5 - 128
    assert secret_length(1000, 1.5, led, 5) == 2172
    assert secret_length(1000, 3.9, led, 5) == 0


@given(bits=st.lists(st.integers(0, 1), max_size=300))
def test_key_file_round_trip(bits):
    k = SecretKey(np.array(bits, np.uint8))
    data = k.to_bytes()
    assert int.from_bytes(data[:8], "little") == len(bits)
    assert len(data) == 8 + (len(bits) + 7) // 8
    np.testing.assert_array_equal(SecretKey.from_bytes(data).bits, k.bits)


def test_confirmation():
    a = SecretKey(np.array([1, 0, 1, 1], np.uint8))
    b = SecretKey(np.array([1, 0, 1, 0], np.uint8))
    assert confirm(a, LoopbackLink(ConfirmResponder(a).handle))
    assert not confirm(a, LoopbackLink(ConfirmResponder(b).handle))
    assert key_tag([]) == SecretKey(np.zeros(0, np.uint8)).confirmation_tag

"""Privacy amplification with a Toeplitz universal hash."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from cvqkd import wire
from cvqkd.reconciliation import LeakageLedger

SAFETY_BITS = 128


@dataclass(frozen=True)
class SecretKey:
    bits: np.ndarray
    session_id: int = 0

    @property
    def length(self) -> int:
        return int(self.bits.size)

    @property
    def confirmation_tag(self) -> bytes:
        return key_tag(self.bits)

    def to_bytes(self) -> bytes:
        """8-byte little-endian bit length followed by the packed key."""
        return self.length.to_bytes(8, "little") + np.packbits(self.bits, bitorder="little").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, session_id: int = 0) -> "SecretKey":
        n = int.from_bytes(data[:8], "little")
        raw = np.frombuffer(data[8:], dtype=np.uint8)
        return cls(np.unpackbits(raw, count=n, bitorder="little"), session_id)


def key_tag(bits) -> bytes:
    packed = np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()
    return hashlib.blake2b(b"key-confirm" + packed + len(bits).to_bytes(8, "little"), digest_size=8).digest()


def secret_length(n_symbols: int, i_be_secure: float, ledger: LeakageLedger, n_slices: int,
                  safety: int = SAFETY_BITS) -> int:
    """Final key length: retained bits minus Eve's information minus a safety term.

    ``max(0, floor(n m - disclosed - n I_BE) - safety)``.
    """
    retained = n_slices * n_symbols - ledger.disclosed_bits
    return max(0, math.floor(retained - n_symbols * i_be_secure) - safety)


def seed_length(n_in: int, length: int) -> int:
    return n_in + length - 1 if length else 0


def compress(bits, seed, length: int, session_id: int = 0) -> SecretKey:
    """Multiply ``bits`` by the Toeplitz matrix ``T[i, j] = seed[i + n - 1 - j]`` over GF(2).

    Evaluated as a full binary convolution by FFT, keeping entries
    ``n - 1 .. n + length - 2``.
    """
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    n = bits.size
    if length < 0 or length > n:
        raise ValueError(f"cannot extract {length} bits from {n}")
    if length == 0:
        return SecretKey(np.zeros(0, dtype=np.uint8), session_id)
    seed = np.asarray(seed, dtype=np.uint8).ravel()
    if seed.size != seed_length(n, length):
        raise ValueError(f"seed must have {seed_length(n, length)} bits, got {seed.size}")
    conv = fftconvolve(seed.astype(float), bits.astype(float))[n - 1 : n - 1 + length]
    out = (np.rint(conv).astype(np.int64) & 1).astype(np.uint8)
    return SecretKey(out, session_id)


def confirm(key_a: SecretKey, link) -> bool:
    """Alice's half of key confirmation over a request link.

    True iff Bob reports matching tags. Empty keys confirm vacuously.
    """
    rsp = link.request(wire.key_confirm(0, True, key_a.confirmation_tag), True)
    if rsp.type == wire.MsgType.ABORT:
        raise wire.WireError("peer aborted during confirmation")
    _, ok, _ = wire.read_key_confirm(rsp)
    return ok


class ConfirmResponder:
    """Bob's half of key confirmation."""

    def __init__(self, key_b: SecretKey):
        self.key = key_b
        self.result = None

    def handle(self, msg):
        _, _, tag = wire.read_key_confirm(msg)
        self.result = tag == self.key.confirmation_tag
        return wire.key_confirm(1, self.result, self.key.confirmation_tag)

"""Sliced reverse reconciliation.

Bob quantises his homodyne outcomes into ``m`` binary-labelled bit slices; Bob's
bits are the reference. Alice corrects her guesses slice by slice (least
significant first), conditioning each guess on the slices already agreed, and
an interactive parity protocol (block parities, bisection, shuffled passes,
cascading back to earlier passes) removes the residual errors. A 64-bit hash
confirms each slice. Every bit Bob discloses is written to a
:class:`LeakageLedger`.

Alice's side is written as a generator that yields ``(message, wants_reply)``
pairs and receives the replies; Bob's side is a plain request handler. The
same code runs in :func:`reconcile_block` and in the two-endpoint session.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from cvqkd import wire
from cvqkd.wire import MsgType

MIN_PASSES = 4
MAX_PASSES = 16
# Leakage of the parity protocol relative to h(e); slices predicted to cost
# more than a full bit per symbol are disclosed instead.
CASCADE_OVERHEAD = 1.2
# first-pass block size is FIRST_BLOCK / BER; larger than the classic 0.73
# because cached sub-block parities make the cascading step cheap
FIRST_BLOCK = 1.5


class ReconciliationError(RuntimeError):
    """Residual mismatch after the protocol finished; the block must be discarded."""


def binary_entropy(e):
    e = np.clip(np.asarray(e, dtype=float), 1e-300, 1 - 1e-16)
    return -(e * np.log2(e) + (1 - e) * np.log2(1 - e))


def digest64(bits) -> bytes:
    """Unkeyed 64-bit hash of a bit array."""
    packed = np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()
    return hashlib.blake2b(packed + len(bits).to_bytes(8, "little"), digest_size=8).digest()


@dataclass(frozen=True)
class SliceCodec:
    """Equiprobable quantiser labelling cells by their natural binary index.

    Once the low slices are agreed the remaining candidate cells for a value
    are ``2**k`` cells apart, which keeps the high slices nearly error-free.
    """

    n_slices: int
    boundaries: np.ndarray

    @property
    def n_cells(self) -> int:
        return 1 << self.n_slices

    def cells(self, y) -> np.ndarray:
        return np.searchsorted(self.boundaries, np.asarray(y, dtype=float), side="right")

    def label_bits(self) -> np.ndarray:
        """``(n_cells, m)`` table; column ``i`` is bit ``i`` of the cell index."""
        c = np.arange(self.n_cells)
        return ((c[:, None] >> np.arange(self.n_slices)) & 1).astype(np.uint8)

    def bits(self, y) -> np.ndarray:
        return self.label_bits()[self.cells(y)]

    def edges(self) -> np.ndarray:
        return np.concatenate([[-np.inf], self.boundaries, [np.inf]])


def design_boundaries(v_b: float, m: int) -> SliceCodec:
    """Boundaries putting probability ``2**-m`` in each cell under ``Normal(0, v_b)``."""
    if v_b <= 0:
        raise ValueError("variance must be positive")
    if not 1 <= m <= 8:
        raise ValueError("slice count must lie in [1, 8]")
    k = np.arange(1, 1 << m)
    b = math.sqrt(v_b) * ndtri(k / float(1 << m))
    b[(1 << m) // 2 - 1] = 0.0
    return SliceCodec(m, b)


def choose_slices(i_ab: float) -> int:
    return int(min(6, max(2, math.ceil(i_ab) + 2)))


class SliceQuantizer(TransformerMixin, BaseEstimator):
    """Fit equiprobable slice boundaries to Bob's data and map values to slice bits.

    ``variance=None`` uses the second moment of the fitted data.
    """

    def __init__(self, n_slices=5, variance=None):
        self.n_slices = n_slices
        self.variance = variance

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=False).reshape(-1)
        v = self.variance if self.variance is not None else float(np.mean(X * X))
        self.codec_ = design_boundaries(v, self.n_slices)
        self.boundaries_ = self.codec_.boundaries
        return self

    def transform(self, X):
        check_is_fitted(self, "codec_")
        X = check_array(X, ensure_2d=False).reshape(-1)
        return self.codec_.bits(X)

    def inverse_transform(self, bits):
        """Cell index of each row of slice bits."""
        check_is_fitted(self, "codec_")
        bits = np.asarray(bits, dtype=np.int64)
        return (bits << np.arange(self.n_slices)).sum(axis=1)


@dataclass
class LeakageLedger:
    n_symbols: int
    per_slice: list = field(default_factory=list)

    def add(self, slice_idx: int, bits: int) -> None:
        while len(self.per_slice) <= slice_idx:
            self.per_slice.append(0)
        self.per_slice[slice_idx] += int(bits)

    @property
    def disclosed_bits(self) -> int:
        return int(sum(self.per_slice))

    def retained_bits(self, n_slices: int) -> int:
        return max(0, n_slices * self.n_symbols - self.disclosed_bits)


def measure_beta(ledger: LeakageLedger, n_slices: int, i_ab_shannon: float) -> float:
    """Reconciliation efficiency: retained bits per symbol over Shannon information."""
    if i_ab_shannon <= 0:
        raise ValueError("Shannon information must be positive")
    return ledger.retained_bits(n_slices) / ledger.n_symbols / i_ab_shannon


# --- Bob ---------------------------------------------------------------------

class SliceResponder:
    """Bob's side: answers parity and hash requests about his slice bits."""

    def __init__(self, bits: np.ndarray):
        self.bits = np.asarray(bits, dtype=np.uint8)
        self._prefix = {}
        self.finished = False
        self.success = False
        self.ledger = LeakageLedger(self.bits.shape[0])

    def _cumsum(self, s: int, p: int) -> np.ndarray:
        key = (s, p)
        if key not in self._prefix:
            raise wire.WireError(f"no shuffle seed for slice {s} pass {p}")
        return self._prefix[key]

    def _register(self, s: int, p: int, perm) -> None:
        col = self.bits[:, s] if perm is None else self.bits[perm, s]
        self._prefix[(s, p)] = np.concatenate([[0], np.cumsum(col, dtype=np.int64)])

    def handle(self, msg: wire.WireMessage):
        """Process one message; returns the reply or ``None``."""
        t = msg.type
        if t == MsgType.SHUFFLE_SEED:
            s, p, seed = wire.read_shuffle_seed(msg)
            self._register(s, p, permutation(seed, self.bits.shape[0]))
            return None
        if t == MsgType.PARITY_REQ:
            req = wire.read_parity_req(msg)
            s = req[0]
            if req[1] == "partition":
                _, _, p, k = req
                if p == wire.IDENTITY_PASS and (s, p) not in self._prefix:
                    self._register(s, p, None)
                cs = self._cumsum(s, p)
                n = cs.size - 1
                edges = np.append(np.arange(0, n, k), n)
                par = (cs[edges[1:]] - cs[edges[:-1]]) & 1
            else:
                rec = req[2]
                par = np.empty(rec.size, dtype=np.int64)
                for p in np.unique(rec["pass"]):
                    sel = rec["pass"] == p
                    cs = self._cumsum(s, int(p))
                    par[sel] = (cs[rec["end"][sel]] - cs[rec["start"][sel]]) & 1
            self.ledger.add(s, par.size)
            return wire.parity_rsp(s, par.astype(np.uint8))
        if t == MsgType.VERIFY_HASH:
            s, payload = wire.read_verify_hash(msg)
            if s == wire.FINAL_SLICE:
                self.finished = True
                self.success = payload[:1] == b"\x00"
                return None
            self.ledger.add(s, 64)
            return wire.verify_hash(s, digest64(self.bits[:, s]))
        raise wire.WireError(f"unexpected {t.name} during reconciliation")


def permutation(seed: int, n: int) -> np.ndarray:
    return np.random.default_rng(seed).permutation(n)


# --- Alice -------------------------------------------------------------------

def cell_likelihoods(x, codec: SliceCodec, slope: float, noise_var: float) -> np.ndarray:
    """``P(Bob's cell = c | Alice's value x)`` for ``y = slope * x + Normal(0, noise_var)``."""
    sd = math.sqrt(noise_var)
    z = (codec.edges()[None, :] - slope * np.asarray(x, dtype=float)[:, None]) / sd
    cdf = ndtr(z)
    return np.maximum(np.diff(cdf, axis=1), 1e-300)


class _Cascade:
    """Parity-protocol state for one slice on Alice's side."""

    def __init__(self, slice_idx, bits, ledger):
        self.s = slice_idx
        self.a = bits
        self.ledger = ledger
        self.passes = []  # dicts: perm, k, top (bob parities), cache

    def _alice_prefix(self, q):
        perm = q["perm"]
        col = self.a if perm is None else self.a[perm]
        return np.concatenate([[0], np.cumsum(col, dtype=np.int64)])

    def add_pass(self, pass_idx, perm, k, top):
        n = self.a.size
        edges = np.append(np.arange(0, n, k), n)
        cache = {(int(a), int(b)): int(v) for a, b, v in zip(edges[:-1], edges[1:], top)}
        self.passes.append(dict(idx=pass_idx, perm=perm, edges=edges, top=np.asarray(top), cache=cache))

    def mismatched(self, q):
        cs = self._alice_prefix(q)
        e = q["edges"]
        alice = (cs[e[1:]] - cs[e[:-1]]) & 1
        bad = np.flatnonzero(alice != q["top"])
        return e[bad], e[bad + 1]

    def resolve(self):
        """Bisect until every block of every pass agrees in parity (generator)."""
        while True:
            for q in self.passes:
                starts, ends = self.mismatched(q)
                if starts.size:
                    break
            else:
                return
            yield from self._bisect(q, starts.astype(np.int64), ends.astype(np.int64))

    def _bisect(self, q, S, E):
        cache = q["cache"]
        cs = self._alice_prefix(q)
        while True:
            active = E - S > 1
            if not np.any(active):
                break
            mid = (S + E) // 2
            need = [i for i in np.flatnonzero(active) if (int(S[i]), int(mid[i])) not in cache]
            if need:
                need = np.asarray(need)
                msg = wire.parity_ranges(self.s, np.full(need.size, q["idx"]), S[need], mid[need])
                rsp = yield msg, True
                _, bits = wire.read_parity_rsp(rsp)
                if bits.size != need.size:
                    raise wire.WireError("parity reply size mismatch")
                self.ledger.add(self.s, bits.size)
                for i, b in zip(need, bits):
                    cache[(int(S[i]), int(mid[i]))] = int(b)
            for i in np.flatnonzero(active):
                s, m, e = int(S[i]), int(mid[i]), int(E[i])
                left = cache[(s, m)]
                cache.setdefault((m, e), left ^ cache[(s, e)])
                if ((cs[m] - cs[s]) & 1) != left:
                    E[i] = m
                else:
                    S[i] = m
        pos = S if q["perm"] is None else q["perm"][S]
        self.a[pos] ^= 1


def alice_reconcile(x, codec: SliceCodec, slope: float, noise_var: float, rng: np.random.Generator,
                    ledger: LeakageLedger, max_passes: int = MAX_PASSES):
    """Alice's reconciliation driver (generator).

    Yields ``(message, wants_reply)``; returns ``(bits, ok)`` where ``bits`` is
    the ``(n, m)`` array of corrected slices.
    """
    x = np.asarray(x, dtype=float)
    n, m = x.size, codec.n_slices
    like = cell_likelihoods(x, codec, slope, noise_var)
    labels = codec.label_bits()
    known = np.zeros((n, m), dtype=np.uint8)
    consistent = np.ones_like(like, dtype=bool)
    ok = True
    for s in range(m):
        w = np.where(consistent, like, 0.0)
        p1 = w[:, labels[:, s] == 1].sum(axis=1) / w.sum(axis=1)
        guess = (p1 > 0.5).astype(np.uint8)
        ber = float(np.mean(np.minimum(p1, 1.0 - p1)))
        if CASCADE_OVERHEAD * binary_entropy(ber) >= 1.0:
            rsp = yield wire.parity_partition(s, wire.IDENTITY_PASS, 1), True
            _, bits = wire.read_parity_rsp(rsp)
            if bits.size != n:
                raise wire.WireError("disclosure size mismatch")
            ledger.add(s, n)
            known[:, s] = bits
        else:
            slice_ok = yield from _cascade_slice(s, guess, ber, rng, ledger, max_passes)
            known[:, s] = guess
            ok &= slice_ok
            if not slice_ok:
                break
        consistent &= labels[None, :, s] == known[:, s, None]
    yield wire.verify_hash(wire.FINAL_SLICE, b"\x00" if ok else b"\x01"), False
    return known, ok


def _cascade_slice(s, a, ber, rng, ledger, max_passes):
    n = a.size
    k0 = n if ber <= FIRST_BLOCK / n else int(min(n, max(4, math.floor(FIRST_BLOCK / ber))))
    state = _Cascade(s, a, ledger)
    k = k0
    for p in range(max_passes):
        seed = int(rng.integers(0, 2**63))
        perm = permutation(seed, n)
        yield wire.shuffle_seed(s, p, seed), False
        rsp = yield wire.parity_partition(s, p, k), True
        _, top = wire.read_parity_rsp(rsp)
        ledger.add(s, top.size)
        state.add_pass(p, perm, k, top)
        yield from state.resolve()
        k = min(n, 2 * k)
        if p + 1 >= MIN_PASSES:
            rsp = yield wire.verify_hash(s), True
            ledger.add(s, 64)
            _, d = wire.read_verify_hash(rsp)
            if d == digest64(a):
                return True
            # an even number of errors is hiding in every block: shrink
            k = max(4, k // 16)
    return False


def reconcile_block(alice_values, bob_values, codec: SliceCodec, classical_link=None, *,
                    slope: float, noise_var: float, seed: int = 0, max_passes: int = MAX_PASSES):
    """Reconcile one block in-process.

    ``classical_link`` is a factory ``handler -> link`` (default
    :class:`~cvqkd.links.LoopbackLink`). Returns ``(bits, ledger)``, the shared
    ``(n, m)`` slice bits and the leakage ledger; raises
    :class:`ReconciliationError` if Alice's bits do not end equal to Bob's.
    """
    from cvqkd.links import LoopbackLink, drive

    bob_bits = codec.bits(bob_values)
    responder = SliceResponder(bob_bits)
    link = (classical_link or LoopbackLink)(responder.handle)
    ledger = LeakageLedger(len(bob_bits))
    bits, ok = drive(
        alice_reconcile(alice_values, codec, slope, noise_var, np.random.default_rng(seed), ledger, max_passes),
        link,
    )
    if not ok or not np.array_equal(bits, bob_bits):
        raise ReconciliationError("residual mismatch after reconciliation")
    return bits, ledger

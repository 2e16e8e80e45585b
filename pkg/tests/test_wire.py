import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvqkd import wire
from cvqkd.core import PulseBatch
from cvqkd.wire import AbortReason, MsgType

HELLO_GOLDEN = bytes.fromhex("4356514B010000000000")


def test_hello_golden_frame():
    assert wire.encode(wire.WireMessage(MsgType.HELLO)) == HELLO_GOLDEN
    assert wire.decode(HELLO_GOLDEN) == wire.WireMessage(MsgType.HELLO)


def test_type_numbering():
    names = ["HELLO", "CONFIG_ACK", "PULSE_BATCH", "SYNC_MARK", "REVEAL_IDX", "REVEAL_VAL", "PARAM_EST",
             "PARITY_REQ", "PARITY_RSP", "SHUFFLE_SEED", "VERIFY_HASH", "PA_SEED", "KEY_CONFIRM", "ABORT"]
    assert [m.name for m in MsgType] == names
    assert [int(m) for m in MsgType] == list(range(14))


@settings(max_examples=10_000, deadline=None)
@given(t=st.sampled_from(list(MsgType)), payload=st.binary(max_size=64))
def test_round_trip_fuzz(t, payload):
    m = wire.WireMessage(t, payload)
    frame = wire.encode(m)
    assert len(frame) == 10 + len(payload)
    assert wire.decode(frame) == m


def test_bad_magic():
    with pytest.raises(wire.MalformedFrame):
        wire.decode(b"XVQK" + HELLO_GOLDEN[4:])


def test_bad_version():
    with pytest.raises(wire.VersionMismatch):
        wire.decode(HELLO_GOLDEN[:4] + b"\x02" + HELLO_GOLDEN[5:])


def test_unknown_type():
    with pytest.raises(wire.UnknownType):
        wire.decode(HELLO_GOLDEN[:5] + b"\x0e" + HELLO_GOLDEN[6:])


@pytest.mark.parametrize("cut", [0, 3, 9])
def test_truncated_header(cut):
    with pytest.raises(wire.MalformedFrame):
        wire.decode(HELLO_GOLDEN[:cut])


def test_truncated_payload():
    frame = wire.encode(wire.WireMessage(MsgType.ABORT, b"\x03abc"))
    with pytest.raises(wire.MalformedFrame):
        wire.decode(frame[:-1])
    with pytest.raises(wire.MalformedFrame):
        list(wire.split_frames(frame + frame[:-2]))


def test_error_classes_distinct():
    assert len({wire.MalformedFrame, wire.UnknownType, wire.VersionMismatch}) == 3
    assert all(issubclass(e, wire.WireError) for e in (wire.MalformedFrame, wire.UnknownType, wire.VersionMismatch))


def test_split_frames():
    frames = [wire.WireMessage(MsgType.HELLO, b"a"), wire.WireMessage(MsgType.ABORT, b"\x05")]
    buf = b"".join(wire.encode(f) for f in frames)
    assert list(wire.split_frames(buf)) == frames


def test_reals_little_endian_binary64():
    m = wire.reveal_val([1.5], [-2.0])
    assert m.payload[4:12] == struct.pack("<d", 1.5)


@given(bits=st.lists(st.integers(0, 1), max_size=200))
def test_bits_round_trip(bits):
    out, end = wire.unpack_bits(wire.pack_bits(bits))
    assert out.tolist() == bits and end == 4 + (len(bits) + 7) // 8


@given(n=st.integers(0, 50), start=st.integers(0, 2**32 - 1), seed=st.integers(0, 2**32 - 1))
def test_pulse_batch_round_trip(n, start, seed):
    rng = np.random.default_rng(seed)
    b = PulseBatch(rng.normal(size=n), rng.normal(size=n), rng.random(n), rng.integers(0, 2, n).astype(np.uint8))
    s, out = wire.read_pulse_batch(wire.decode(wire.encode(wire.pulse_batch(start, b))))
    assert s == start
    for f in ("mean_x", "mean_p", "excess_var", "kind"):
        np.testing.assert_array_equal(getattr(out, f), getattr(b, f))


def test_payload_helpers_round_trip():
    off, q = wire.read_sync_mark(wire.sync_mark(37, [0, 1, 1, 0, 1]))
    assert off == 37 and q.tolist() == [0, 1, 1, 0, 1]
    np.testing.assert_array_equal(wire.read_reveal_idx(wire.reveal_idx([3, 9, 200000])), [3, 9, 200000])
    x, p = wire.read_reveal_val(wire.reveal_val([1.0, 2.0], [3.0, 4.0]))
    assert x.tolist() == [1, 2] and p.tolist() == [3, 4]
    vals = {k: float(i) for i, k in enumerate(wire.PARAM_FIELDS)}
    out = wire.read_param_est(wire.param_est(vals, 12000, True, 5))
    assert all(out[k] == vals[k] for k in wire.PARAM_FIELDS)
    assert (out["n_used"], out["tamper"], out["n_slices"]) == (12000, True, 5)
    assert wire.read_shuffle_seed(wire.shuffle_seed(2, 7, 2**63 - 1)) == (2, 7, 2**63 - 1)
    assert wire.read_parity_req(wire.parity_partition(1, 3, 64)) == (1, "partition", 3, 64)
    s, mode, rec = wire.read_parity_req(wire.parity_ranges(4, [0, 1], [0, 10], [5, 20]))
    assert (s, mode) == (4, "ranges") and rec["end"].tolist() == [5, 20]
    s, bits = wire.read_parity_rsp(wire.parity_rsp(3, [1, 0, 1]))
    assert s == 3 and bits.tolist() == [1, 0, 1]
    assert wire.read_verify_hash(wire.verify_hash(2, b"12345678")) == (2, b"12345678")
    length, seed = wire.read_pa_seed(wire.pa_seed(5, [1, 1, 0]))
    assert length == 5 and seed.tolist() == [1, 1, 0]
    assert wire.read_key_confirm(wire.key_confirm(1, False, b"tag")) == (1, False, b"tag")
    assert wire.read_abort(wire.abort(AbortReason.TAMPER_DETECTED, "x")) == (AbortReason.TAMPER_DETECTED, "x")
    assert wire.read_config_ack(wire.config_ack(True)) and not wire.read_config_ack(wire.config_ack(False))


def test_length_checks():
    with pytest.raises(wire.MalformedFrame):
        wire.read_param_est(wire.WireMessage(MsgType.PARAM_EST, b"\x00" * 3))
    with pytest.raises(wire.MalformedFrame):
        wire.read_reveal_idx(wire.WireMessage(MsgType.REVEAL_IDX, struct.pack("<I", 3)))
    with pytest.raises(wire.MalformedFrame):
        wire.read_parity_req(wire.WireMessage(MsgType.PARITY_REQ, b"\x00\x07"))


def test_describe_every_type():
    for t in MsgType:
        assert wire.describe(wire.WireMessage(t, b""))


def test_type_partition():
    assert wire.PHYSICS_TYPES == {MsgType.PULSE_BATCH}
    assert not wire.PHYSICS_TYPES & wire.CLASSICAL_TYPES

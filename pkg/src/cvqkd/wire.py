"""Binary wire format shared by the physics and classical links.

Frame layout (10-byte header, little-endian)::

    +-------+---------+------+------------+-----------------+
    | magic | version | type | length u32 | payload[length] |
    | CVQK  |   u8    |  u8  |            |                 |
    +-------+---------+------+------------+-----------------+

Reals inside payloads are IEEE-754 binary64, little-endian. Bit strings are
packed with ``numpy.packbits(bitorder="little")``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from cvqkd.core import PulseBatch

MAGIC = b"CVQK"
VERSION = 1
HEADER = struct.Struct("<4sBBI")
HEADER_SIZE = HEADER.size
MAX_PAYLOAD = 1 << 28


class MsgType(enum.IntEnum):
    HELLO = 0
    CONFIG_ACK = 1
    PULSE_BATCH = 2
    SYNC_MARK = 3
    REVEAL_IDX = 4
    REVEAL_VAL = 5
    PARAM_EST = 6
    PARITY_REQ = 7
    PARITY_RSP = 8
    SHUFFLE_SEED = 9
    VERIFY_HASH = 10
    PA_SEED = 11
    KEY_CONFIRM = 12
    ABORT = 13


PHYSICS_TYPES = frozenset({MsgType.PULSE_BATCH})
CLASSICAL_TYPES = frozenset(MsgType) - PHYSICS_TYPES


class AbortReason(enum.IntEnum):
    """Abort codes; values double as CLI exit codes."""

    NO_POSITIVE_RATE = 3
    TAMPER_DETECTED = 4
    LINK_ERROR = 5
    RECONCILIATION_FAILED = 6
    CONFIG_MISMATCH = 7
    SYNC_FAILED = 8
    PROTOCOL_ERROR = 9


class WireError(Exception):
    code = "wire"


class MalformedFrame(WireError):
    code = "malformed"


class UnknownType(WireError):
    code = "unknown-type"


class VersionMismatch(WireError):
    code = "version"


@dataclass(frozen=True)
class WireMessage:
    type: MsgType
    payload: bytes = b""

    def __post_init__(self):
        object.__setattr__(self, "type", MsgType(self.type))
        object.__setattr__(self, "payload", bytes(self.payload))


def encode(msg: WireMessage) -> bytes:
    if len(msg.payload) > MAX_PAYLOAD:
        raise MalformedFrame("payload too large")
    return HEADER.pack(MAGIC, VERSION, int(msg.type), len(msg.payload)) + msg.payload


def decode_header(header: bytes) -> tuple[int, int]:
    """Validate a header, returning ``(type, payload_length)``."""
    if len(header) < HEADER_SIZE:
        raise MalformedFrame("truncated header")
    magic, version, mtype, length = HEADER.unpack_from(header)
    if magic != MAGIC:
        raise MalformedFrame(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"version {version} != {VERSION}")
    if mtype not in MsgType._value2member_map_:
        raise UnknownType(f"message type {mtype}")
    if length > MAX_PAYLOAD:
        raise MalformedFrame("payload too large")
    return mtype, length


def decode(data: bytes) -> WireMessage:
    """Decode exactly one frame."""
    mtype, length = decode_header(data)
    if len(data) != HEADER_SIZE + length:
        raise MalformedFrame(f"frame is {len(data)} bytes, header says {HEADER_SIZE + length}")
    return WireMessage(MsgType(mtype), data[HEADER_SIZE:])


def split_frames(buf: bytes):
    """Yield consecutive frames from a byte buffer."""
    pos = 0
    while pos < len(buf):
        _, length = decode_header(buf[pos : pos + HEADER_SIZE])
        end = pos + HEADER_SIZE + length
        if end > len(buf):
            raise MalformedFrame("truncated frame")
        yield decode(buf[pos:end])
        pos = end


# --- payload helpers -------------------------------------------------------

def pack_bits(bits) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    return struct.pack("<I", bits.size) + np.packbits(bits, bitorder="little").tobytes()


def unpack_bits(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    (n,) = struct.unpack_from("<I", buf, offset)
    nbytes = (n + 7) // 8
    start = offset + 4
    if start + nbytes > len(buf):
        raise MalformedFrame("truncated bit string")
    raw = np.frombuffer(buf, dtype=np.uint8, count=nbytes, offset=start)
    return np.unpackbits(raw, count=n, bitorder="little"), start + nbytes


PULSE_DTYPE = np.dtype([("x", "<f8"), ("p", "<f8"), ("excess", "<f8"), ("kind", "u1")])


def pulse_batch(start: int, batch: PulseBatch) -> WireMessage:
    rec = np.empty(len(batch), dtype=PULSE_DTYPE)
    rec["x"], rec["p"], rec["excess"], rec["kind"] = batch.mean_x, batch.mean_p, batch.excess_var, batch.kind
    return WireMessage(MsgType.PULSE_BATCH, struct.pack("<II", start, len(batch)) + rec.tobytes())


def read_pulse_batch(msg: WireMessage) -> tuple[int, PulseBatch]:
    start, n = struct.unpack_from("<II", msg.payload)
    if len(msg.payload) != 8 + n * PULSE_DTYPE.itemsize:
        raise MalformedFrame("pulse batch length mismatch")
    rec = np.frombuffer(msg.payload, dtype=PULSE_DTYPE, count=n, offset=8)
    return start, PulseBatch(rec["x"].copy(), rec["p"].copy(), rec["excess"].copy(), rec["kind"].copy())


def sync_mark(offset: int, quadratures) -> WireMessage:
    return WireMessage(MsgType.SYNC_MARK, struct.pack("<I", offset) + pack_bits(quadratures))


def read_sync_mark(msg: WireMessage) -> tuple[int, np.ndarray]:
    (offset,) = struct.unpack_from("<I", msg.payload)
    q, _ = unpack_bits(msg.payload, 4)
    return offset, q


def reveal_idx(indices) -> WireMessage:
    idx = np.asarray(indices, dtype="<u4")
    return WireMessage(MsgType.REVEAL_IDX, struct.pack("<I", idx.size) + idx.tobytes())


def read_reveal_idx(msg: WireMessage) -> np.ndarray:
    (n,) = struct.unpack_from("<I", msg.payload)
    if len(msg.payload) != 4 + 4 * n:
        raise MalformedFrame("reveal index length mismatch")
    return np.frombuffer(msg.payload, dtype="<u4", count=n, offset=4).astype(np.int64)


def reveal_val(x, p) -> WireMessage:
    vals = np.column_stack([x, p]).astype("<f8")
    return WireMessage(MsgType.REVEAL_VAL, struct.pack("<I", vals.shape[0]) + vals.tobytes())


def read_reveal_val(msg: WireMessage) -> tuple[np.ndarray, np.ndarray]:
    (n,) = struct.unpack_from("<I", msg.payload)
    if len(msg.payload) != 4 + 16 * n:
        raise MalformedFrame("reveal value length mismatch")
    vals = np.frombuffer(msg.payload, dtype="<f8", count=2 * n, offset=4).reshape(n, 2)
    return vals[:, 0].copy(), vals[:, 1].copy()


PARAM_FIELDS = (
    "theta", "theta_se", "gain", "gain_se", "xi", "xi_se", "xi_secure",
    "slope", "residual_variance", "bob_variance", "va_eff", "v_el",
)
_PARAM = struct.Struct("<" + "d" * len(PARAM_FIELDS) + "IBB")


def param_est(values: dict, n_used: int, tamper: bool, n_slices: int) -> WireMessage:
    return WireMessage(
        MsgType.PARAM_EST,
        _PARAM.pack(*(float(values[k]) for k in PARAM_FIELDS), n_used, int(tamper), n_slices),
    )


def read_param_est(msg: WireMessage) -> dict:
    if len(msg.payload) != _PARAM.size:
        raise MalformedFrame("parameter estimate length mismatch")
    vals = _PARAM.unpack(msg.payload)
    out = dict(zip(PARAM_FIELDS, vals))
    out["n_used"], out["tamper"], out["n_slices"] = vals[-3], bool(vals[-2]), vals[-1]
    return out


IDENTITY_PASS = 0xFFFF
REQ_RANGES, REQ_PARTITION = 0, 1
_RANGE = np.dtype([("pass", "<u2"), ("start", "<u4"), ("end", "<u4")])


def shuffle_seed(slice_idx: int, pass_idx: int, seed: int) -> WireMessage:
    return WireMessage(MsgType.SHUFFLE_SEED, struct.pack("<BHQ", slice_idx, pass_idx, seed))


def read_shuffle_seed(msg: WireMessage) -> tuple[int, int, int]:
    return struct.unpack("<BHQ", msg.payload)


def parity_partition(slice_idx: int, pass_idx: int, block: int) -> WireMessage:
    return WireMessage(MsgType.PARITY_REQ, struct.pack("<BBHI", slice_idx, REQ_PARTITION, pass_idx, block))


def parity_ranges(slice_idx: int, passes, starts, ends) -> WireMessage:
    rec = np.empty(len(starts), dtype=_RANGE)
    rec["pass"], rec["start"], rec["end"] = passes, starts, ends
    head = struct.pack("<BBI", slice_idx, REQ_RANGES, rec.size)
    return WireMessage(MsgType.PARITY_REQ, head + rec.tobytes())


def read_parity_req(msg: WireMessage):
    """Returns ``(slice, "partition", pass, block)`` or ``(slice, "ranges", record_array)``."""
    slice_idx, mode = struct.unpack_from("<BB", msg.payload)
    if mode == REQ_PARTITION:
        pass_idx, block = struct.unpack_from("<HI", msg.payload, 2)
        return slice_idx, "partition", pass_idx, block
    if mode == REQ_RANGES:
        (n,) = struct.unpack_from("<I", msg.payload, 2)
        if len(msg.payload) != 6 + n * _RANGE.itemsize:
            raise MalformedFrame("parity request length mismatch")
        return slice_idx, "ranges", np.frombuffer(msg.payload, dtype=_RANGE, count=n, offset=6)
    raise MalformedFrame(f"parity request mode {mode}")


def parity_rsp(slice_idx: int, bits) -> WireMessage:
    return WireMessage(MsgType.PARITY_RSP, struct.pack("<B", slice_idx) + pack_bits(bits))


def read_parity_rsp(msg: WireMessage) -> tuple[int, np.ndarray]:
    (slice_idx,) = struct.unpack_from("<B", msg.payload)
    bits, _ = unpack_bits(msg.payload, 1)
    return slice_idx, bits


FINAL_SLICE = 0xFF


def verify_hash(slice_idx: int, digest: bytes = b"") -> WireMessage:
    return WireMessage(MsgType.VERIFY_HASH, struct.pack("<B", slice_idx) + digest)


def read_verify_hash(msg: WireMessage) -> tuple[int, bytes]:
    return msg.payload[0], msg.payload[1:]


def pa_seed(length: int, seed_bits) -> WireMessage:
    return WireMessage(MsgType.PA_SEED, struct.pack("<I", length) + pack_bits(seed_bits))


def read_pa_seed(msg: WireMessage) -> tuple[int, np.ndarray]:
    (length,) = struct.unpack_from("<I", msg.payload)
    bits, _ = unpack_bits(msg.payload, 4)
    return length, bits


def key_confirm(role: int, ok: bool, digest: bytes) -> WireMessage:
    return WireMessage(MsgType.KEY_CONFIRM, struct.pack("<BB", role, int(ok)) + digest)


def read_key_confirm(msg: WireMessage) -> tuple[int, bool, bytes]:
    role, ok = struct.unpack_from("<BB", msg.payload)
    return role, bool(ok), msg.payload[2:]


def abort(reason: AbortReason, text: str = "") -> WireMessage:
    return WireMessage(MsgType.ABORT, struct.pack("<B", int(reason)) + text.encode())


def read_abort(msg: WireMessage) -> tuple[AbortReason, str]:
    return AbortReason(msg.payload[0]), msg.payload[1:].decode(errors="replace")


def config_ack(ok: bool) -> WireMessage:
    return WireMessage(MsgType.CONFIG_ACK, struct.pack("<B", 0 if ok else 1))


def read_config_ack(msg: WireMessage) -> bool:
    if len(msg.payload) != 1:
        raise MalformedFrame("config ack length mismatch")
    return msg.payload[0] == 0


def describe(msg: WireMessage) -> str:
    """One-line human rendering, used by the transcript dump tool."""
    t = msg.type
    try:
        if t == MsgType.HELLO:
            lines = msg.payload.decode().count("\n")
            return f"HELLO config ({lines} keys)"
        if t == MsgType.CONFIG_ACK:
            status = "ok" if msg.payload[:1] == b"\x00" else "mismatch"
            return f"CONFIG_ACK {status}"
        if t == MsgType.PULSE_BATCH:
            start, n = struct.unpack_from("<II", msg.payload)
            return f"PULSE_BATCH start={start} n={n}"
        if t == MsgType.SYNC_MARK:
            off, q = read_sync_mark(msg)
            return f"SYNC_MARK offset={off} quadratures={q.size}"
        if t == MsgType.REVEAL_IDX:
            return f"REVEAL_IDX n={read_reveal_idx(msg).size}"
        if t == MsgType.REVEAL_VAL:
            return f"REVEAL_VAL n={read_reveal_val(msg)[0].size}"
        if t == MsgType.PARAM_EST:
            d = read_param_est(msg)
            return (f"PARAM_EST theta={d['theta']:.5f} G={d['gain']:.5f} xi={d['xi']:.5f} "
                    f"xi_secure={d['xi_secure']:.5f} tamper={int(d['tamper'])}")
        if t == MsgType.PARITY_REQ:
            r = read_parity_req(msg)
            if r[1] == "partition":
                return f"PARITY_REQ slice={r[0]} pass={r[2]} block={r[3]}"
            return f"PARITY_REQ slice={r[0]} ranges={r[2].size}"
        if t == MsgType.PARITY_RSP:
            s, bits = read_parity_rsp(msg)
            return f"PARITY_RSP slice={s} bits={bits.size}"
        if t == MsgType.SHUFFLE_SEED:
            s, p, seed = read_shuffle_seed(msg)
            return f"SHUFFLE_SEED slice={s} pass={p} seed={seed:#018x}"
        if t == MsgType.VERIFY_HASH:
            s, d = read_verify_hash(msg)
            return f"VERIFY_HASH slice={s} {d.hex() or 'request'}"
        if t == MsgType.PA_SEED:
            length, bits = read_pa_seed(msg)
            return f"PA_SEED length={length} seed_bits={bits.size}"
        if t == MsgType.KEY_CONFIRM:
            role, ok, d = read_key_confirm(msg)
            return f"KEY_CONFIRM {'alice' if role == 0 else 'bob'} ok={int(ok)} {d.hex()}"
        if t == MsgType.ABORT:
            reason, text = read_abort(msg)
            return f"ABORT {reason.name} {text}"
    except (struct.error, WireError, ValueError, IndexError) as exc:
        return f"{t.name} <undecodable payload: {exc}>"
    return t.name

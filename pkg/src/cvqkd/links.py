"""Link bindings: in-process loopback with transcript capture, and framed
byte streams over sockets."""

from __future__ import annotations

import hashlib
import socket
import struct
from dataclasses import dataclass, field

from cvqkd import wire

CLASSICAL, PHYSICS = 0, 1
A_TO_B, B_TO_A = 0, 1
_REC = struct.Struct("<BB")


@dataclass
class Transcript:
    """Append-only log of every frame sent on either link."""

    records: list = field(default_factory=list)

    def append(self, link: int, direction: int, frame: bytes) -> None:
        self.records.append((link, direction, frame))

    def to_bytes(self) -> bytes:
        return b"".join(_REC.pack(l, d) + f for l, d, f in self.records)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Transcript":
        out = cls()
        pos = 0
        while pos < len(data):
            link, direction = _REC.unpack_from(data, pos)
            pos += _REC.size
            _, length = wire.decode_header(data[pos : pos + wire.HEADER_SIZE])
            end = pos + wire.HEADER_SIZE + length
            if end > len(data):
                raise wire.MalformedFrame("truncated transcript")
            out.append(link, direction, data[pos:end])
            pos = end
        return out

    def digest(self, link: int | None = None) -> str:
        h = hashlib.sha256()
        for l, d, f in self.records:
            if link is None or l == link:
                h.update(_REC.pack(l, d) + f)
        return h.hexdigest()

    def messages(self, link: int | None = None, direction: int | None = None):
        for l, d, f in self.records:
            if (link is None or l == link) and (direction is None or d == direction):
                yield l, d, wire.decode(f)

    def dump(self) -> str:
        names = {CLASSICAL: "classical", PHYSICS: "physics"}
        arrows = {A_TO_B: "A->B", B_TO_A: "B->A"}
        lines = []
        for i, (l, d, msg) in enumerate(self.messages()):
            lines.append(f"{i:6d} {names[l]:9s} {arrows[d]} {wire.describe(msg)}")
        return "\n".join(lines) + ("\n" if lines else "")


class LoopbackLink:
    """Request/response link to an in-process handler; every frame goes
    through encode/decode and into the transcript."""

    def __init__(self, handler, transcript: Transcript | None = None, direction: int = A_TO_B):
        self.handler = handler
        self.transcript = transcript if transcript is not None else Transcript()
        self.direction = direction

    def request(self, msg: wire.WireMessage, wants_reply: bool):
        frame = wire.encode(msg)
        self.transcript.append(CLASSICAL, self.direction, frame)
        reply = self.handler(wire.decode(frame))
        if reply is None:
            if wants_reply:
                raise wire.WireError(f"no reply to {msg.type.name}")
            return None
        back = wire.encode(reply)
        self.transcript.append(CLASSICAL, 1 - self.direction, back)
        if not wants_reply:
            raise wire.WireError(f"unexpected reply to {msg.type.name}")
        return wire.decode(back)


def drive(gen, link):
    """Run a ``(message, wants_reply)`` generator against a request link."""
    reply = None
    try:
        while True:
            msg, wants = gen.send(reply)
            reply = link.request(msg, wants)
    except StopIteration as stop:
        return stop.value


class LinkClosed(wire.WireError):
    code = "link-closed"


class StreamLink:
    """Framed messages over a connected stream socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock

    def send(self, msg: wire.WireMessage) -> bytes:
        frame = wire.encode(msg)
        self.sock.sendall(frame)
        return frame

    def _read(self, n: int) -> bytes:
        chunks = []
        while n:
            chunk = self.sock.recv(min(n, 1 << 20))
            if not chunk:
                raise LinkClosed("peer closed the link")
            chunks.append(chunk)
            n -= len(chunk)
        return b"".join(chunks)

    def recv(self) -> tuple[wire.WireMessage, bytes]:
        header = self._read(wire.HEADER_SIZE)
        _, length = wire.decode_header(header)
        frame = header + self._read(length)
        return wire.decode(frame), frame

    def close(self):
        self.sock.close()

"""Message frames: 4-byte big-endian length, kind byte, 8-byte job id, payload."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

_PREFIX = struct.Struct(">I")
_HEAD = struct.Struct(">BQ")
MAX_FRAME = 1 << 30


class TransportError(RuntimeError):
    pass


class Kind(enum.IntEnum):
    TASK = 1
    RESULT = 2
    SPAWN = 3
    SHUTDOWN = 4
    HEARTBEAT = 5
    ERROR = 6


@dataclass(frozen=True)
class Message:
    kind: Kind
    job_id: int = 0
    payload: bytes = b""
    sender: str = ""  # filled in by the receiving side, not sent


def encode_frame(msg: Message) -> bytes:
    body = _HEAD.pack(int(msg.kind), msg.job_id) + bytes(msg.payload)
    return _PREFIX.pack(len(body)) + body


def decode_body(body: bytes, sender: str = "") -> Message:
    if len(body) < _HEAD.size:
        raise TransportError(f"frame body too short ({len(body)} bytes)")
    kind, job_id = _HEAD.unpack_from(body)
    try:
        kind = Kind(kind)
    except ValueError:
        raise TransportError(f"unknown message kind {kind}") from None
    return Message(kind, job_id, body[_HEAD.size:], sender)


def decode_frame(data: bytes, sender: str = "") -> Message:
    if len(data) < _PREFIX.size:
        raise TransportError("frame truncated in length prefix")
    (length,) = _PREFIX.unpack_from(data)
    body = data[_PREFIX.size:]
    if len(body) != length:
        raise TransportError(f"frame declares {length} bytes, got {len(body)}")
    return decode_body(body, sender)


def read_exact(sock, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(min(n, 1 << 20))
        if not chunk:
            raise TransportError("connection closed mid-frame" if chunks else "connection closed")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_message(sock, sender: str = "") -> Message:
    (length,) = _PREFIX.unpack(read_exact(sock, _PREFIX.size))
    if length > MAX_FRAME:
        raise TransportError(f"frame of {length} bytes exceeds limit")
    return decode_body(read_exact(sock, length), sender)


def parse_address(addr: str):
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {addr!r}")
    return host, int(port)


def format_address(addr) -> str:
    return f"{addr[0]}:{addr[1]}"

"""Wire protocol: framed, CRC-protected messages carrying weights/metrics.

Frame layout (little-endian):

    magic    4 bytes  b"FLRT"
    version  u8       1
    msg_type u8
    round    u32
    length   u64      payload byte count
    payload  ...      per-type encoding, see below
    crc      u32      CRC32 over every preceding byte of the frame

Tensor encoding inside payloads: name (u16 length + UTF-8), dtype u8
(0 = f32, 1 = f64), ndim u8, dims u32 each, then row-major data.
Deserialization of a serialized message is bit-exact.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from ..models import ModelWeights

MAGIC = b"FLRT"
VERSION = 1

_PREFIX = struct.Struct("<4sBBIQ")  # magic, version, type, round, payload length
_CRC = struct.Struct("<I")

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}

MAX_PAYLOAD = 1 << 40  # sanity bound; a corrupted length field fails fast


class MsgType(IntEnum):
    CONFIGURE = 0
    TRAIN_REQUEST = 1
    TRAIN_RESPONSE = 2
    EVAL_REQUEST = 3
    EVAL_RESPONSE = 4
    SHUTDOWN = 5
    ERROR = 6


class ProtocolError(Exception):
    """Base for wire-format violations."""


class BadMagicError(ProtocolError):
    pass


class BadVersionError(ProtocolError):
    pass


class BadTypeError(ProtocolError):
    pass


class TruncatedFrameError(ProtocolError):
    pass


class CrcMismatchError(ProtocolError):
    pass


class PayloadError(ProtocolError):
    pass


@dataclass
class Message:
    msg_type: MsgType
    round: int = 0
    weights: ModelWeights | None = None
    centre_id: str | None = None  # Configure handshake
    n_train: int | None = None  # Configure handshake
    n_val: int | None = None  # Configure handshake
    n: int | None = None  # sample count behind a response metric
    loss: float | None = None
    accuracy: float | None = None
    error: str | None = None

    def __eq__(self, other):
        if not isinstance(other, Message):
            return NotImplemented
        plain = (
            "msg_type round centre_id n_train n_val n loss accuracy error".split()
        )
        if any(getattr(self, f) != getattr(other, f) for f in plain):
            return False
        if (self.weights is None) != (other.weights is None):
            return False
        return self.weights is None or self.weights == other.weights


def _pack_str(s):
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise PayloadError("string too long for u16 length prefix")
    return struct.pack("<H", len(raw)) + raw


def _pack_tensors(weights):
    parts = [struct.pack("<I", len(weights.entries))]
    for name, arr in weights.entries:
        dt = np.dtype(arr.dtype)
        if dt not in _DTYPE_CODES:
            raise PayloadError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        if arr.ndim > 0xFF:
            raise PayloadError(f"tensor {name!r} rank {arr.ndim} too large")
        parts.append(_pack_str(name))
        parts.append(struct.pack("<BB", _DTYPE_CODES[dt], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).astype(dt.newbyteorder("<")).tobytes())
    return b"".join(parts)


class _Cursor:
    def __init__(self, data):
        self.data = data
        self.off = 0

    def take(self, n):
        if self.off + n > len(self.data):
            raise PayloadError("payload ended early")
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def u8(self):
        return self.take(1)[0]

    def unpack(self, fmt):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def string(self):
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")

    def tensors(self):
        (count,) = self.unpack("<I")
        entries = []
        for _ in range(count):
            name = self.string()
            code, ndim = self.unpack("<BB")
            if code not in _DTYPES:
                raise PayloadError(f"unknown tensor dtype code {code}")
            dims = self.unpack(f"<{ndim}I")
            size = int(np.prod(dims)) if dims else 1
            dt = _DTYPES[code]
            raw = self.take(size * dt.itemsize)
            arr = np.frombuffer(raw, dtype=dt).reshape(dims).copy()
            entries.append((name, arr))
        return ModelWeights(entries)

    def done(self):
        if self.off != len(self.data):
            raise PayloadError(f"{len(self.data) - self.off} unparsed payload bytes")


def _encode_payload(msg):
    t = msg.msg_type
    if t == MsgType.CONFIGURE:
        return (
            _pack_str(msg.centre_id or "")
            + struct.pack("<II", msg.n_train or 0, msg.n_val or 0)
        )
    if t in (MsgType.TRAIN_REQUEST, MsgType.EVAL_REQUEST):
        if msg.weights is None:
            raise PayloadError(f"{t.name} requires weights")
        return _pack_tensors(msg.weights)
    if t == MsgType.TRAIN_RESPONSE:
        if msg.weights is None:
            raise PayloadError("TRAIN_RESPONSE requires weights")
        head = struct.pack("<Id", msg.n or 0, msg.loss if msg.loss is not None else 0.0)
        return head + _pack_tensors(msg.weights)
    if t == MsgType.EVAL_RESPONSE:
        return struct.pack(
            "<Idd",
            msg.n or 0,
            msg.accuracy if msg.accuracy is not None else 0.0,
            msg.loss if msg.loss is not None else 0.0,
        )
    if t == MsgType.SHUTDOWN:
        return b""
    if t == MsgType.ERROR:
        return _pack_str(msg.error or "")
    raise BadTypeError(f"unknown message type {t}")


def _decode_payload(msg_type, round_, payload):
    cur = _Cursor(payload)
    msg = Message(msg_type=msg_type, round=round_)
    if msg_type == MsgType.CONFIGURE:
        msg.centre_id = cur.string()
        msg.n_train, msg.n_val = cur.unpack("<II")
    elif msg_type in (MsgType.TRAIN_REQUEST, MsgType.EVAL_REQUEST):
        msg.weights = cur.tensors()
    elif msg_type == MsgType.TRAIN_RESPONSE:
        msg.n, msg.loss = cur.unpack("<Id")
        msg.weights = cur.tensors()
    elif msg_type == MsgType.EVAL_RESPONSE:
        msg.n, msg.accuracy, msg.loss = cur.unpack("<Idd")
    elif msg_type == MsgType.SHUTDOWN:
        pass
    elif msg_type == MsgType.ERROR:
        msg.error = cur.string()
    cur.done()
    return msg


def serialize_message(msg):
    if not 0 <= msg.round <= 0xFFFFFFFF:
        raise PayloadError(f"round {msg.round} does not fit u32")
    payload = _encode_payload(msg)
    head = _PREFIX.pack(MAGIC, VERSION, int(msg.msg_type), msg.round, len(payload))
    frame = head + payload
    return frame + _CRC.pack(zlib.crc32(frame))


def deserialize_message(data):
    if len(data) < _PREFIX.size:
        raise TruncatedFrameError(f"frame of {len(data)} bytes has no full header")
    magic, version, msg_type, round_, length = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadVersionError(f"unsupported version {version}")
    if length > MAX_PAYLOAD:
        raise PayloadError(f"payload length {length} exceeds bound")
    total = _PREFIX.size + length + _CRC.size
    if len(data) < total:
        raise TruncatedFrameError(f"frame needs {total} bytes, got {len(data)}")
    if len(data) > total:
        raise PayloadError(f"{len(data) - total} trailing bytes after frame")
    (crc_stored,) = _CRC.unpack_from(data, total - _CRC.size)
    if zlib.crc32(data[: total - _CRC.size]) != crc_stored:
        raise CrcMismatchError("frame failed CRC32 check")
    try:
        mt = MsgType(msg_type)
    except ValueError as exc:
        raise BadTypeError(f"unknown message type {msg_type}") from exc
    return _decode_payload(mt, round_, data[_PREFIX.size : _PREFIX.size + length])


def read_frame(read_exactly):
    """Read one frame from a stream via ``read_exactly(n) -> bytes``."""
    head = read_exactly(_PREFIX.size)
    if len(head) < _PREFIX.size:
        raise TruncatedFrameError("stream closed inside frame header")
    magic, version, _, _, length = _PREFIX.unpack_from(head)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadVersionError(f"unsupported version {version}")
    if length > MAX_PAYLOAD:
        raise PayloadError(f"payload length {length} exceeds bound")
    rest = read_exactly(length + _CRC.size)
    if len(rest) < length + _CRC.size:
        raise TruncatedFrameError("stream closed inside frame body")
    return head + rest

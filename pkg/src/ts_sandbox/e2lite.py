"""E2-lite: a small, bit-exact binary protocol between E2 nodes and the RIC.

Frame layout (all multi-byte integers little-endian)::

    offset size field
    0      4    magic        b"E2LT"
    4      1    version      1
    5      1    msg_type     1..5 (see MsgType)
    6      4    node_id      u32
    10     8    timestamp_ms u64  (baseline Unix ms + simulated elapsed ms)
    18     4    payload_len  u32
    22     ...  payload

Payloads, in fixed field order with no tags:

* SUBSCRIPTION_REQUEST: report_period_ms u32, n u16, n x (len u16, utf-8 bytes)
* SUBSCRIPTION_ACK: empty
* KPM_INDICATION: window_end_ms u64, cell_id u32, prb_util_pct f64, active_ues f64,
  tb_count f64, share_qpsk f64, share_16qam f64, share_64qam f64, n_ues u32, then per
  UE: ue_id u32, pdcp_throughput_bps f64, n u16, n x (cell_id u32, sinr_db f64) with
  cells ascending. A NaN float means the measurement is missing.
* RIC_CONTROL: ue_id u32, target_cell_id u32
* CONTROL_ACK: ue_id u32, cell_id u32, status u8 (see AckStatus)
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Iterable, Union

from .sim.world import CellKpm, KpmReport, UeKpm

MAGIC = b"E2LT"
VERSION = 1
HEADER = struct.Struct("<4sBBIQI")
HEADER_SIZE = HEADER.size  # 22
MAX_PAYLOAD = 2**32 - 1
U64_MAX = 2**64 - 1

_CELL = struct.Struct("<QI6d")
_UE = struct.Struct("<IdH")
_SINR = struct.Struct("<Id")


class MsgType(enum.IntEnum):
    SUBSCRIPTION_REQUEST = 1
    SUBSCRIPTION_ACK = 2
    KPM_INDICATION = 3
    RIC_CONTROL = 4
    CONTROL_ACK = 5


class AckStatus(enum.IntEnum):
    EXECUTED = 0
    REJECTED = 1
    # RIC -> node: every control for the current window has been sent
    WINDOW_DONE = 2


class E2Error(ValueError):
    pass


class BadMagic(E2Error):
    pass


class UnsupportedVersion(E2Error):
    pass


class UnknownMessageType(E2Error):
    pass


class Truncated(E2Error):
    pass


class LengthMismatch(E2Error):
    pass


class PayloadTooLarge(E2Error):
    pass


@dataclass(frozen=True)
class SubscriptionRequest:
    report_period_ms: int
    kpm_names: tuple[str, ...] = ()


@dataclass(frozen=True)
class SubscriptionAck:
    pass


@dataclass
class KpmIndication:
    report: KpmReport


@dataclass(frozen=True)
class RicControl:
    ue_id: int
    target_cell_id: int


@dataclass(frozen=True)
class ControlAck:
    ue_id: int
    cell_id: int
    status: AckStatus = AckStatus.EXECUTED


Payload = Union[SubscriptionRequest, SubscriptionAck, KpmIndication, RicControl, ControlAck]

_TYPE_OF = {
    SubscriptionRequest: MsgType.SUBSCRIPTION_REQUEST,
    SubscriptionAck: MsgType.SUBSCRIPTION_ACK,
    KpmIndication: MsgType.KPM_INDICATION,
    RicControl: MsgType.RIC_CONTROL,
    ControlAck: MsgType.CONTROL_ACK,
}


@dataclass
class E2Message:
    node_id: int
    timestamp_ms: int
    payload: Payload = field(default_factory=SubscriptionAck)

    @property
    def msg_type(self) -> MsgType:
        return _TYPE_OF[type(self.payload)]


def wall_timestamp_ms(base_unix_ms: int, sim_elapsed_ms: int) -> int:
    """Timestamp carried by simulator messages: baseline Unix time plus simulated time."""
    ts = int(base_unix_ms) + int(sim_elapsed_ms)
    if not 0 <= ts <= U64_MAX:
        raise ValueError(f"timestamp {ts} outside u64 range")
    return ts


# -- encoding -------------------------------------------------------------------


def _encode_payload(p: Payload) -> bytes:
    if isinstance(p, SubscriptionRequest):
        parts = [struct.pack("<IH", p.report_period_ms, len(p.kpm_names))]
        for name in p.kpm_names:
            raw = name.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)) + raw)
        return b"".join(parts)
    if isinstance(p, SubscriptionAck):
        return b""
    if isinstance(p, KpmIndication):
        r = p.report
        c = r.cell_level
        parts = [_CELL.pack(r.window_end_ms, c.cell_id, c.prb_util_pct, c.active_ues,
                            c.tb_count, c.share_qpsk, c.share_16qam, c.share_64qam),
                 struct.pack("<I", len(r.ue_level))]
        for u in r.ue_level:
            parts.append(_UE.pack(u.ue_id, u.pdcp_throughput_bps, len(u.sinr_db_by_cell)))
            for cid in sorted(u.sinr_db_by_cell):
                parts.append(_SINR.pack(cid, u.sinr_db_by_cell[cid]))
        return b"".join(parts)
    if isinstance(p, RicControl):
        return struct.pack("<II", p.ue_id, p.target_cell_id)
    if isinstance(p, ControlAck):
        return struct.pack("<IIB", p.ue_id, p.cell_id, int(p.status))
    raise TypeError(f"not an E2-lite payload: {type(p).__name__}")


def encode_message(msg: E2Message) -> bytes:
    try:
        payload = _encode_payload(msg.payload)
    except struct.error as exc:
        raise E2Error(f"field out of range: {exc}") from exc
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds u32 length")
    try:
        header = HEADER.pack(MAGIC, VERSION, msg.msg_type, msg.node_id, msg.timestamp_ms,
                             len(payload))
    except struct.error as exc:
        raise E2Error(f"header field out of range: {exc}") from exc
    return header + payload


# -- decoding -------------------------------------------------------------------


class _Reader:
    def __init__(self, data: memoryview):
        self.data = data
        self.pos = 0

    def take(self, st: struct.Struct) -> tuple:
        if self.pos + st.size > len(self.data):
            raise LengthMismatch("payload shorter than its declared contents")
        out = st.unpack_from(self.data, self.pos)
        self.pos += st.size
        return out

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise LengthMismatch("payload shorter than its declared contents")
        out = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return out


_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_SUB = struct.Struct("<IH")
_CTRL = struct.Struct("<II")
_ACK = struct.Struct("<IIB")


def _decode_payload(mtype: MsgType, node_id: int, data: memoryview) -> Payload:
    rd = _Reader(data)
    if mtype is MsgType.SUBSCRIPTION_REQUEST:
        period, n = rd.take(_SUB)
        names = []
        for _ in range(n):
            (ln,) = rd.take(_U16)
            try:
                names.append(rd.raw(ln).decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise E2Error(f"KPM name is not UTF-8: {exc}") from exc
        out: Payload = SubscriptionRequest(period, tuple(names))
    elif mtype is MsgType.SUBSCRIPTION_ACK:
        out = SubscriptionAck()
    elif mtype is MsgType.KPM_INDICATION:
        end, cid, prb, z, p, q, q16, q64 = rd.take(_CELL)
        (n_ues,) = rd.take(_U32)
        ues = []
        for _ in range(n_ues):
            uid, thr, n = rd.take(_UE)
            sinr = {}
            for _ in range(n):
                c, s = rd.take(_SINR)
                sinr[c] = s
            ues.append(UeKpm(uid, thr, sinr))
        out = KpmIndication(KpmReport(node_id, end, CellKpm(cid, prb, z, p, q, q16, q64), ues))
    elif mtype is MsgType.RIC_CONTROL:
        out = RicControl(*rd.take(_CTRL))
    else:
        uid, cid, status = rd.take(_ACK)
        try:
            out = ControlAck(uid, cid, AckStatus(status))
        except ValueError as exc:
            raise E2Error(f"unknown ack status {status}") from exc
    if rd.pos != len(data):
        raise LengthMismatch(f"{len(data) - rd.pos} trailing payload bytes")
    return out


def _parse_header(buf) -> tuple[MsgType, int, int, int]:
    magic, version, mtype, node_id, ts, plen = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {bytes(magic)!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported version {version}")
    try:
        mt = MsgType(mtype)
    except ValueError:
        raise UnknownMessageType(f"unknown msg_type {mtype}") from None
    return mt, node_id, ts, plen


def decode_frame(buf) -> tuple[E2Message, int]:
    """Decode the frame at the start of ``buf``; returns (message, bytes consumed)."""
    view = memoryview(buf)
    if len(view) < HEADER_SIZE:
        # still validate what is present so garbage is reported early
        if len(view) >= 4 and bytes(view[:4]) != MAGIC:
            raise BadMagic(f"bad magic {bytes(view[:4])!r}")
        raise Truncated(f"need {HEADER_SIZE} header bytes, have {len(view)}")
    mt, node_id, ts, plen = _parse_header(view)
    total = HEADER_SIZE + plen
    if len(view) < total:
        raise Truncated(f"frame needs {total} bytes, have {len(view)}")
    payload = _decode_payload(mt, node_id, view[HEADER_SIZE:total])
    return E2Message(node_id, ts, payload), total


def decode_message(data: bytes) -> E2Message:
    msg, used = decode_frame(data)
    if used != len(data):
        raise LengthMismatch(f"{len(data) - used} bytes after the frame")
    return msg


class StreamReassembler:
    """Recovers whole messages from an arbitrarily fragmented byte stream.

    Owned by a single connection. After a framing error the stream is
    unusable and every further :meth:`feed` re-raises it.
    """

    def __init__(self) -> None:
        self._buf = bytearray()
        self._error: E2Error | None = None

    def feed(self, data: bytes) -> list[E2Message]:
        if self._error is not None:
            raise self._error
        self._buf += data
        out = []
        while True:
            try:
                msg, used = decode_frame(self._buf)
            except Truncated:
                break
            except E2Error as exc:
                self._error = exc
                raise
            del self._buf[:used]
            out.append(msg)
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)


def encode_stream(messages: Iterable[E2Message]) -> bytes:
    return b"".join(encode_message(m) for m in messages)


@dataclass(frozen=True)
class EndpointBinding:
    node_id: int
    address: str
    port: int


def validate_bindings(bindings: Iterable[EndpointBinding]) -> dict[int, EndpointBinding]:
    """Index bindings by port; ports and node ids must be unique."""
    by_port: dict[int, EndpointBinding] = {}
    nodes = set()
    for b in bindings:
        if b.port in by_port:
            raise E2Error(f"port {b.port} bound to nodes {by_port[b.port].node_id} and {b.node_id}")
        if b.node_id in nodes:
            raise E2Error(f"node {b.node_id} bound twice")
        if not 0 < b.port < 65536:
            raise E2Error(f"invalid port {b.port}")
        by_port[b.port] = b
        nodes.add(b.node_id)
    return by_port


def default_bindings(node_ids: Iterable[int], base_port: int, address: str = "127.0.0.1"
                     ) -> list[EndpointBinding]:
    """All nodes share one address, each on ``base_port + node_id``."""
    return [EndpointBinding(n, address, base_port + n) for n in sorted(node_ids)]

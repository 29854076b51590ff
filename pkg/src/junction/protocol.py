"""Bit-exact wire protocol for engine/server synchronization.

Every datagram starts with a fixed 24-byte little-endian header::

    magic u32 | version u8 | msg_type u8 | flags u8 | kind u8 |
    session u16 | agent_id u16 | seq u32 | timestamp_us u64

followed by a message-type specific payload.  All multi-byte fields are
little-endian, floats IEEE-754.  SNAPSHOT payloads are
``tick u64 | sim_time_us u64 | n u16`` plus ``n`` 38-byte agent records
(id u32, kind u8, flags u8, x f64, y f64, heading f32, speed f32,
yaw_rate f32, aux f32), so a serialized snapshot is exactly
``24 + 18 + 38*n`` bytes.  Snapshots fragment at 35 records to stay
under the 1400-byte datagram budget.

decode() never reads past the datagram boundary; malformed input raises
a typed ``DecodeError`` (callers drop the datagram and bump a counter).
The same byte strings travel unchanged over the WebSocket bridge as
single binary frames.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .world import (
    AgentKind,
    AssistLevel,
    ControlInput,
    CyclistInput,
    DriverInput,
    InputValidationError,
    PedestrianInput,
)

MAGIC = 0x53494D31
VERSION = 1

KIND_NONE = 0xFF          # header kind byte for server/broadcast traffic
BROADCAST_AGENT = 0xFFFF

MAX_DATAGRAM = 1400
MAX_SNAPSHOT_AGENTS = 35

HEADER = struct.Struct("<IBBBBHHIQ")
RECORD = struct.Struct("<IBBddffff")
assert HEADER.size == 24
assert RECORD.size == 38


class MsgType:
    HELLO = 0x01
    WELCOME = 0x02
    INPUT = 0x03
    SNAPSHOT = 0x04
    EVENT = 0x05
    PING = 0x06
    PONG = 0x07
    QRESPONSE = 0x08
    NBACK = 0x09
    BYE = 0x0F


class DecodeError(Exception):
    """Base for all datagram rejection causes."""


class BadMagic(DecodeError):
    pass


class BadVersion(DecodeError):
    pass


class Truncated(DecodeError):
    pass


class UnknownType(DecodeError):
    pass


class OutOfRange(DecodeError):
    """Enum byte or validated input field outside its declared range."""


def f32(x: float) -> float:
    """Quantize to IEEE-754 single precision (wire resolution)."""
    return struct.unpack("<f", struct.pack("<f", x))[0]


@dataclass(frozen=True)
class Meta:
    """Header fields other than magic/version/msg_type."""
    session: int = 0
    agent_id: int = 0
    seq: int = 0
    timestamp_us: int = 0
    flags: int = 0
    kind: int = KIND_NONE


@dataclass(frozen=True)
class Hello:
    role: AgentKind
    display_name: str = ""

    def __post_init__(self):
        if len(self.display_name.encode("utf-8")) > 32:
            raise ValueError("display_name over 32 bytes")


@dataclass(frozen=True)
class Welcome:
    assigned_agent_id: int
    tick_rate_hz: int
    snapshot_div: int
    scenario_hash: int


@dataclass(frozen=True)
class Input:
    control: ControlInput
    client_tick_hint: int = 0

    def __post_init__(self):
        c = self.control
        if isinstance(c, DriverInput):
            c = DriverInput(f32(c.steer_wheel), f32(c.throttle),
                            f32(c.brake), c.gear)
        elif isinstance(c, CyclistInput):
            c = CyclistInput(f32(c.power), f32(c.cadence), f32(c.steer),
                             f32(c.brake), c.assist_level)
        elif isinstance(c, PedestrianInput):
            c = PedestrianInput(f32(c.walk_speed), f32(c.walk_heading),
                                c.seated_request)
        object.__setattr__(self, "control", c)


@dataclass(frozen=True)
class AgentRecord:
    agent_id: int
    kind: int
    flags: int
    x: float
    y: float
    heading: float
    speed: float
    yaw_rate: float
    aux: float

    def __post_init__(self):
        for name in ("heading", "speed", "yaw_rate", "aux"):
            object.__setattr__(self, name, f32(getattr(self, name)))


@dataclass(frozen=True)
class Snapshot:
    tick: int
    sim_time_us: int
    records: tuple[AgentRecord, ...] = ()


@dataclass(frozen=True)
class Event:
    code: int
    subject: int = 0
    object_id: int = 0
    value: float = 0.0


@dataclass(frozen=True)
class Ping:
    t0: int


@dataclass(frozen=True)
class Pong:
    t0: int
    t1: int
    t2: int


@dataclass(frozen=True)
class QResponse:
    instrument: int
    item: int
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", f32(self.value))


NBACK_STIMULUS = 0
NBACK_RESPONSE = 1


@dataclass(frozen=True)
class Nback:
    nkind: int  # NBACK_STIMULUS or NBACK_RESPONSE
    symbol: int
    rt_hint: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rt_hint", f32(self.rt_hint))


@dataclass(frozen=True)
class Bye:
    pass


Body = Hello | Welcome | Input | Snapshot | Event | Ping | Pong | QResponse | Nback | Bye

_TYPE_OF_BODY = {
    Hello: MsgType.HELLO, Welcome: MsgType.WELCOME, Input: MsgType.INPUT,
    Snapshot: MsgType.SNAPSHOT, Event: MsgType.EVENT, Ping: MsgType.PING,
    Pong: MsgType.PONG, QResponse: MsgType.QRESPONSE, Nback: MsgType.NBACK,
    Bye: MsgType.BYE,
}


@dataclass(frozen=True)
class Packet:
    body: Body
    meta: Meta = field(default_factory=Meta)

    @property
    def msg_type(self) -> int:
        return _TYPE_OF_BODY[type(self.body)]


# --- encode -----------------------------------------------------------------

def _encode_input(control: ControlInput, hint: int) -> tuple[bytes, int]:
    """Payload bytes plus the header kind byte for a control input."""
    if isinstance(control, DriverInput):
        return (struct.pack("<fffbQ", control.steer_wheel, control.throttle,
                            control.brake, control.gear, hint),
                int(AgentKind.DRIVER))
    if isinstance(control, CyclistInput):
        return (struct.pack("<ffffBQ", control.power, control.cadence,
                            control.steer, control.brake,
                            int(control.assist_level), hint),
                int(AgentKind.CYCLIST))
    if isinstance(control, PedestrianInput):
        return (struct.pack("<ffBQ", control.walk_speed, control.walk_heading,
                            int(control.seated_request), hint),
                int(AgentKind.PEDESTRIAN))
    # AV policy actuation never crosses the wire; a takeover input from the
    # AV seat is a DriverInput with header kind AUTOMATED_VEHICLE.
    raise ValueError("AV policy input has no wire representation")


# header kind bytes sharing each control payload layout
_COMPATIBLE_KINDS = {
    DriverInput: (int(AgentKind.DRIVER), int(AgentKind.AUTOMATED_VEHICLE)),
    CyclistInput: (int(AgentKind.CYCLIST),),
    PedestrianInput: (int(AgentKind.PEDESTRIAN), int(AgentKind.TRANSIT_USER)),
}


def encode(pkt: Packet) -> bytes:
    """Serialize a packet; decode(encode(p)) == p for any valid packet."""
    body = pkt.body
    meta = pkt.meta
    kind = meta.kind
    if isinstance(body, Hello):
        name = body.display_name.encode("utf-8")
        payload = struct.pack("<BB", int(body.role), len(name)) + name
    elif isinstance(body, Welcome):
        payload = struct.pack("<HHBQ", body.assigned_agent_id,
                              body.tick_rate_hz, body.snapshot_div,
                              body.scenario_hash)
    elif isinstance(body, Input):
        payload, input_kind = _encode_input(body.control, body.client_tick_hint)
        if kind == KIND_NONE:
            kind = input_kind
        elif kind not in _COMPATIBLE_KINDS[type(body.control)]:
            raise ValueError(
                f"header kind {kind} incompatible with "
                f"{type(body.control).__name__} payload")
    elif isinstance(body, Snapshot):
        if len(body.records) > MAX_SNAPSHOT_AGENTS:
            raise ValueError("snapshot over the 35-record fragment limit")
        parts = [struct.pack("<QQH", body.tick, body.sim_time_us,
                             len(body.records))]
        parts += [RECORD.pack(r.agent_id, r.kind, r.flags, r.x, r.y,
                              r.heading, r.speed, r.yaw_rate, r.aux)
                  for r in body.records]
        payload = b"".join(parts)
    elif isinstance(body, Event):
        payload = struct.pack("<HIId", body.code, body.subject,
                              body.object_id, body.value)
    elif isinstance(body, Ping):
        payload = struct.pack("<Q", body.t0)
    elif isinstance(body, Pong):
        payload = struct.pack("<QQQ", body.t0, body.t1, body.t2)
    elif isinstance(body, QResponse):
        payload = struct.pack("<BBf", body.instrument, body.item, body.value)
    elif isinstance(body, Nback):
        payload = struct.pack("<BBf", body.nkind, body.symbol, body.rt_hint)
    elif isinstance(body, Bye):
        payload = b""
    else:
        raise ValueError(f"cannot encode {type(body).__name__}")
    header = HEADER.pack(MAGIC, VERSION, _TYPE_OF_BODY[type(body)],
                         meta.flags, kind, meta.session, meta.agent_id,
                         meta.seq, meta.timestamp_us)
    out = header + payload
    if len(out) > MAX_DATAGRAM:
        raise ValueError(f"datagram {len(out)} bytes exceeds {MAX_DATAGRAM}")
    return out


# --- decode -----------------------------------------------------------------

def _need(data: bytes, offset: int, count: int):
    if len(data) < offset + count:
        raise Truncated(f"need {offset + count} bytes, have {len(data)}")


def _decode_input(kind: int, data: bytes, offset: int) -> Input:
    # takeover inputs from the AV seat share the driver layout
    if kind in (int(AgentKind.DRIVER), int(AgentKind.AUTOMATED_VEHICLE)):
        _need(data, offset, 21)
        steer, throttle, brake, gear, hint = struct.unpack_from(
            "<fffbQ", data, offset)
        control: ControlInput = DriverInput(steer, throttle, brake, gear)
    elif kind == int(AgentKind.CYCLIST):
        _need(data, offset, 25)
        power, cadence, steer, brake, assist, hint = struct.unpack_from(
            "<ffffBQ", data, offset)
        try:
            level = AssistLevel(assist)
        except ValueError:
            raise OutOfRange(f"assist level {assist}") from None
        control = CyclistInput(power, cadence, steer, brake, level)
    elif kind in (int(AgentKind.PEDESTRIAN), int(AgentKind.TRANSIT_USER)):
        _need(data, offset, 17)
        speed, heading, seated, hint = struct.unpack_from("<ffBQ", data, offset)
        control = PedestrianInput(speed, heading, bool(seated))
    else:
        raise OutOfRange(f"input kind {kind}")
    try:
        control.validate()
    except InputValidationError as e:
        raise OutOfRange(str(e)) from None
    return Input(control, hint)


def decode(data: bytes) -> Packet:
    """Parse one datagram.  Raises a DecodeError subclass on bad input."""
    _need(data, 0, HEADER.size)
    magic, version, msg_type, flags, kind, session, agent_id, seq, ts = \
        HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagic(hex(magic))
    if version != VERSION:
        raise BadVersion(str(version))
    meta = Meta(session=session, agent_id=agent_id, seq=seq,
                timestamp_us=ts, flags=flags, kind=kind)
    off = HEADER.size
    body: Body
    if msg_type == MsgType.HELLO:
        _need(data, off, 2)
        role, nlen = struct.unpack_from("<BB", data, off)
        try:
            role_kind = AgentKind(role)
        except ValueError:
            raise OutOfRange(f"role {role}") from None
        if nlen > 32:
            raise OutOfRange(f"name length {nlen}")
        _need(data, off + 2, nlen)
        try:
            name = data[off + 2:off + 2 + nlen].decode("utf-8")
        except UnicodeDecodeError:
            raise OutOfRange("display name not UTF-8") from None
        body = Hello(role_kind, name)
    elif msg_type == MsgType.WELCOME:
        _need(data, off, 13)
        aid, rate, div, shash = struct.unpack_from("<HHBQ", data, off)
        body = Welcome(aid, rate, div, shash)
    elif msg_type == MsgType.INPUT:
        body = _decode_input(kind, data, off)
    elif msg_type == MsgType.SNAPSHOT:
        _need(data, off, 18)
        tick, sim_time_us, n = struct.unpack_from("<QQH", data, off)
        if n > MAX_SNAPSHOT_AGENTS:
            raise OutOfRange(f"snapshot record count {n}")
        _need(data, off + 18, n * RECORD.size)
        records = []
        for i in range(n):
            vals = RECORD.unpack_from(data, off + 18 + i * RECORD.size)
            records.append(AgentRecord(*vals))
        body = Snapshot(tick, sim_time_us, tuple(records))
    elif msg_type == MsgType.EVENT:
        _need(data, off, 18)
        code, subject, obj, value = struct.unpack_from("<HIId", data, off)
        body = Event(code, subject, obj, value)
    elif msg_type == MsgType.PING:
        _need(data, off, 8)
        body = Ping(struct.unpack_from("<Q", data, off)[0])
    elif msg_type == MsgType.PONG:
        _need(data, off, 24)
        body = Pong(*struct.unpack_from("<QQQ", data, off))
    elif msg_type == MsgType.QRESPONSE:
        _need(data, off, 6)
        instrument, item, value = struct.unpack_from("<BBf", data, off)
        body = QResponse(instrument, item, value)
    elif msg_type == MsgType.NBACK:
        _need(data, off, 6)
        nkind, symbol, rt = struct.unpack_from("<BBf", data, off)
        if nkind not in (NBACK_STIMULUS, NBACK_RESPONSE):
            raise OutOfRange(f"nback kind {nkind}")
        body = Nback(nkind, symbol, rt)
    elif msg_type == MsgType.BYE:
        body = Bye()
    else:
        raise UnknownType(hex(msg_type))
    return Packet(body, meta)


# --- clock sync -------------------------------------------------------------

@dataclass(frozen=True)
class ClockSample:
    """One NTP-style exchange, all stamps in microseconds.

    t0 client send, t1 server receive, t2 server send, t3 client receive.
    """
    t0: int
    t1: int
    t2: int
    t3: int

    def __post_init__(self):
        if self.t3 < self.t0 or self.t2 < self.t1:
            raise ValueError("clock sample violates causality")

    @property
    def offset_us(self) -> int:
        """Server-minus-client offset estimate, truncated toward zero."""
        num = (self.t1 - self.t0) + (self.t2 - self.t3)
        if num >= 0:
            return num // 2
        return -((-num) // 2)

    @property
    def delay_us(self) -> int:
        return (self.t3 - self.t0) - (self.t2 - self.t1)


def estimate_offset(samples: list[ClockSample], window: int = 8) -> tuple[int, int]:
    """Offset/delay from the minimum-delay sample in the trailing window.

    Minimum-delay filtering rejects queuing spikes; ties resolve to the
    earliest sample for determinism.
    """
    if not samples:
        raise ValueError("no clock samples")
    recent = samples[-window:] if window > 0 else samples
    best = recent[0]
    for s in recent[1:]:
        if s.delay_us < best.delay_us:
            best = s
    return best.offset_us, best.delay_us


def sequence_gate(last_seq: int, incoming_seq: int) -> bool:
    """Latest-wins input gating: True iff the datagram should be applied."""
    return incoming_seq > last_seq


# --- websocket bridge framing -------------------------------------------------

def ws_frame(pkt: Packet) -> bytes:
    """Bytes carried in one binary WebSocket message: identical to UDP."""
    return encode(pkt)


def ws_unframe(data: bytes) -> Packet:
    return decode(data)

import math
import random
import struct

import pytest
from hypothesis import given, strategies as st

from junction import protocol
from junction.protocol import (
    AgentRecord,
    BadMagic,
    BadVersion,
    Bye,
    ClockSample,
    DecodeError,
    Event,
    Hello,
    Input,
    Meta,
    Nback,
    OutOfRange,
    Packet,
    Ping,
    Pong,
    QResponse,
    Snapshot,
    Welcome,
    decode,
    encode,
    estimate_offset,
    f32,
    sequence_gate,
    ws_frame,
    ws_unframe,
)
from junction.world import (
    AgentKind,
    AssistLevel,
    CyclistInput,
    DriverInput,
    PedestrianInput,
)


def rand_meta(rng: random.Random) -> Meta:
    return Meta(session=rng.randrange(0, 1 << 16),
                agent_id=rng.randrange(0, 1 << 16),
                seq=rng.randrange(0, 1 << 32),
                timestamp_us=rng.randrange(0, 1 << 63),
                flags=rng.randrange(0, 256),
                kind=rng.choice([0, 1, 2, 3, 4, 0xFF]))


def rand_record(rng: random.Random) -> AgentRecord:
    return AgentRecord(
        agent_id=rng.randrange(0, 1 << 32), kind=rng.randrange(0, 5),
        flags=rng.randrange(0, 256),
        x=rng.uniform(-1e4, 1e4), y=rng.uniform(-1e4, 1e4),
        heading=rng.uniform(-math.pi, math.pi),
        speed=rng.uniform(-60, 60), yaw_rate=rng.uniform(-3, 3),
        aux=rng.uniform(0, 200))


def rand_control(rng: random.Random):
    kind = rng.randrange(3)
    if kind == 0:
        return DriverInput(steer_wheel=f32(rng.uniform(-7.8, 7.8)),
                           throttle=f32(rng.uniform(0, 1)),
                           brake=f32(rng.uniform(0, 1)),
                           gear=rng.randrange(-1, 7))
    if kind == 1:
        return CyclistInput(power=f32(rng.uniform(0, 500)),
                            cadence=f32(rng.uniform(0, 120)),
                            steer=f32(rng.uniform(-1.5, 1.5)),
                            brake=f32(rng.uniform(0, 1)),
                            assist_level=AssistLevel(rng.randrange(4)))
    return PedestrianInput(walk_speed=f32(rng.uniform(0, 4)),
                           walk_heading=f32(rng.uniform(-3, 3)),
                           seated_request=rng.random() < 0.5)


def rand_packet(rng: random.Random) -> Packet:
    choice = rng.randrange(10)
    meta = rand_meta(rng)
    if choice == 0:
        body = Hello(AgentKind(rng.randrange(5)),
                     "".join(rng.choice("abcdefgh") for _ in range(rng.randrange(9))))
    elif choice == 1:
        body = Welcome(rng.randrange(1 << 16), rng.randrange(20, 1000),
                       rng.randrange(1, 10), rng.randrange(1 << 64))
    elif choice == 2:
        body = Input(rand_control(rng), rng.randrange(1 << 63))
        compatible = protocol._COMPATIBLE_KINDS[type(body.control)]
        meta = Meta(session=meta.session, agent_id=meta.agent_id,
                    seq=meta.seq, timestamp_us=meta.timestamp_us,
                    flags=meta.flags, kind=rng.choice(compatible))
    elif choice == 3:
        n = rng.randrange(0, 36)
        body = Snapshot(rng.randrange(1 << 63), rng.randrange(1 << 63),
                        tuple(rand_record(rng) for _ in range(n)))
    elif choice == 4:
        body = Event(rng.randrange(1 << 16), rng.randrange(1 << 32),
                     rng.randrange(1 << 32), rng.uniform(-1e9, 1e9))
    elif choice == 5:
        body = Ping(rng.randrange(1 << 63))
    elif choice == 6:
        body = Pong(rng.randrange(1 << 63), rng.randrange(1 << 63),
                    rng.randrange(1 << 63))
    elif choice == 7:
        body = QResponse(rng.randrange(5), rng.randrange(20),
                         rng.uniform(0, 100))
    elif choice == 8:
        body = Nback(rng.randrange(2), rng.randrange(65, 91),
                     rng.uniform(0, 2.5))
    else:
        body = Bye()
    return Packet(body, meta)


class TestLayout:
    def test_header_is_24_bytes(self):
        assert protocol.HEADER.size == 24
        assert len(encode(Packet(Bye()))) == 24

    def test_bye_msg_type(self):
        data = encode(Packet(Bye()))
        assert data[5] == 0x0F

    def test_ping_is_header_plus_8_zero_bytes(self):
        data = encode(Packet(Ping(0)))
        assert len(data) == 32
        assert data[24:] == b"\x00" * 8

    def test_magic_little_endian(self):
        data = encode(Packet(Bye()))
        assert struct.unpack_from("<I", data, 0)[0] == 0x53494D31

    @pytest.mark.parametrize("n", [0, 1, 35])
    def test_snapshot_size_law(self, n):
        rng = random.Random(n)
        body = Snapshot(7, 70_000, tuple(rand_record(rng) for _ in range(n)))
        assert len(encode(Packet(body))) == 24 + 18 + 38 * n

    def test_snapshot_over_fragment_limit_rejected(self):
        rng = random.Random(0)
        body = Snapshot(0, 0, tuple(rand_record(rng) for _ in range(36)))
        with pytest.raises(ValueError):
            encode(Packet(body))

    def test_datagrams_stay_under_mtu(self):
        rng = random.Random(1)
        body = Snapshot(0, 0, tuple(rand_record(rng) for _ in range(35)))
        assert len(encode(Packet(body))) <= 1400


class TestRoundTrip:
    def test_fuzz_corpus_round_trips(self):
        rng = random.Random(20250810)
        for _ in range(10_000):
            pkt = rand_packet(rng)
            assert decode(encode(pkt)) == pkt

    def test_hello_name_utf8(self):
        pkt = Packet(Hello(AgentKind.PEDESTRIAN, "wanderer"))
        assert decode(encode(pkt)) == pkt

    def test_hello_name_over_32_bytes_rejected(self):
        with pytest.raises(ValueError):
            Hello(AgentKind.DRIVER, "x" * 33)

    def test_ws_frame_identity(self):
        rng = random.Random(7)
        for _ in range(100):
            pkt = rand_packet(rng)
            assert ws_unframe(ws_frame(pkt)) == pkt
            assert ws_frame(pkt) == encode(pkt)


class TestDecodeErrors:
    def test_bad_magic(self):
        data = bytearray(encode(Packet(Bye())))
        data[0] ^= 0xFF
        with pytest.raises(BadMagic):
            decode(bytes(data))

    def test_bad_version(self):
        data = bytearray(encode(Packet(Bye())))
        data[4] = 99
        with pytest.raises(BadVersion):
            decode(bytes(data))

    def test_unknown_type(self):
        data = bytearray(encode(Packet(Bye())))
        data[5] = 0xEE
        with pytest.raises(DecodeError):
            decode(bytes(data))

    def test_truncation_never_panics(self):
        # every prefix of every message type decodes or raises DecodeError
        rng = random.Random(99)
        packets = [rand_packet(rng) for _ in range(100)]
        for pkt in packets:
            data = encode(pkt)
            for cut in range(len(data)):
                try:
                    decode(data[:cut])
                except DecodeError:
                    pass

    def test_out_of_range_input_rejected_not_clamped(self):
        # hand-build an INPUT with throttle 1.5
        good = encode(Packet(Input(DriverInput(0.0, 1.0, 0.0, 1), 0)))
        bad = bytearray(good)
        struct.pack_into("<f", bad, 24 + 4, 1.5)
        with pytest.raises(OutOfRange):
            decode(bytes(bad))

    def test_bad_assist_enum(self):
        good = encode(Packet(Input(CyclistInput(), 0),
                             Meta(kind=int(AgentKind.CYCLIST))))
        bad = bytearray(good)
        bad[24 + 16] = 9
        with pytest.raises(OutOfRange):
            decode(bytes(bad))


class TestSequenceGate:
    def test_accepts_newer(self):
        assert sequence_gate(5, 6)

    def test_rejects_duplicate(self):
        assert not sequence_gate(5, 5)

    def test_rejects_stale(self):
        assert not sequence_gate(5, 3)


class TestClockSync:
    def test_zero_latency_equal_clocks(self):
        s = ClockSample(100, 100, 100, 100)
        assert s.offset_us == 0
        assert s.delay_us == 0

    def test_hand_arithmetic(self):
        s = ClockSample(100, 160, 165, 130)
        assert s.offset_us == 47  # 47.5 truncated toward zero
        assert s.delay_us == 25

    def test_truncation_toward_zero_negative(self):
        # theta = ((40-100) + (45-130)) / 2 = -72.5: truncation toward
        # zero gives -72 where floor division would give -73
        s = ClockSample(100, 40, 45, 130)
        assert s.offset_us == -72

    def test_symmetric_link_exact(self):
        offset = 50_000
        one_way = 10_000
        t0 = 1_000_000
        t1 = t0 + one_way + offset
        t2 = t1 + 500
        t3 = t2 - offset + one_way
        s = ClockSample(t0, t1, t2, t3)
        assert s.offset_us == offset

    def test_min_delay_filter(self):
        clean = ClockSample(0, 1_050, 1_060, 110)       # delay 100
        noisy = ClockSample(0, 31_000, 31_010, 60_010)  # delay 60_000
        offset, delay = estimate_offset([noisy, clean, noisy])
        assert delay == clean.delay_us
        assert offset == clean.offset_us

    def test_window_limits_lookback(self):
        old = ClockSample(0, 1_000, 1_010, 20)      # tiny delay, old
        recent = [ClockSample(i, 5_000 + i, 5_010 + i, 2_000 + i)
                  for i in range(1, 9)]
        offset, _ = estimate_offset([old] + recent, window=8)
        assert offset == recent[0].offset_us

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            estimate_offset([])

    def test_causality_enforced(self):
        with pytest.raises(ValueError):
            ClockSample(100, 50, 40, 90)

    def test_offset_recovery_simulated_link(self):
        # symmetric delays: exact recovery; asymmetry Delta bounds error
        # by Delta/2 over randomized trials
        rng = random.Random(4242)
        for _ in range(1000):
            offset = rng.randrange(-1_000_000, 1_000_001)
            base = rng.randrange(0, 1 << 40)
            fwd = rng.randrange(100, 50_000)
            rev = rng.randrange(100, 50_000)
            proc = rng.randrange(0, 1_000)
            t0 = base
            t1 = t0 + fwd + offset
            t2 = t1 + proc
            t3 = t2 - offset + rev
            est, _ = estimate_offset([ClockSample(t0, t1, t2, t3)])
            delta = abs(fwd - rev)
            assert abs(est - offset) <= delta / 2 + 1
            if fwd == rev:
                assert est == offset


@given(st.integers(min_value=0, max_value=2**32 - 1),
       st.integers(min_value=0, max_value=2**32 - 1))
def test_sequence_gate_total_order(last, incoming):
    assert sequence_gate(last, incoming) == (incoming > last)

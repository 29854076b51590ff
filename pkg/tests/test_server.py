import io
import json
import math

import pytest

from junction.events import EventCode, read_log
from junction.protocol import (
    Event,
    Hello,
    Input,
    Meta,
    Packet,
    QResponse,
    Welcome,
    decode,
)
from junction.scenario import load_scenario
from junction.server import (
    ReplayDivergence,
    Session,
    SessionConfig,
    replay,
)
from junction.world import (
    AgentKind,
    ControlAuthority,
    DriverInput,
    PedestrianInput,
    distance_to_conflict,
)
from conftest import load_named_scenario

TRANSIT_SCENARIO = """
{
  "map": {
    "conflict_points": {"stop": [0.0, 0.0]},
    "approach_paths": [
      {"id": "bus_route", "points": [[-100.0, 0.0], [0.0, 0.0]],
       "conflict_point": "stop"},
      {"id": "platform", "points": [[-40.0, 3.0], [0.0, 3.0], [0.0, 0.0]],
       "conflict_point": "stop"}
    ]
  },
  "agents": [
    {"name": "bus", "kind": "driver", "path": "bus_route",
     "target_speed": 8.0, "controlled_by": "script", "sync": false,
     "start_s": 40.0,
     "transit_stops": [{"at_s": 100.0, "dwell_s": 20.0}]},
    {"name": "rider", "kind": "transit_user", "path": "platform",
     "target_speed": 1.4, "controlled_by": "human", "sync": false,
     "start_s": 41.0}
  ],
  "conflict_point": "stop",
  "sync_tta_s": 12.0,
  "seed": 11
}
"""


def drive_ticks(sess, n):
    for _ in range(n):
        sess.run_tick()
        sess.take_outbound()


class TestTickBasics:
    def test_sim_time_integer_arithmetic(self, fig6_spec):
        sess = Session(fig6_spec, SessionConfig(tick_rate_hz=30))
        for _ in range(100):
            sess.run_tick()
            assert sess.sim_time_us == sess.tick * 1_000_000 // 30
        sess.take_outbound()

    def test_empty_world_snapshot_cadence(self):
        spec = load_scenario(
            '{"map": {"conflict_points": {"c": [0,0]},'
            ' "approach_paths": []}, "agents": [],'
            ' "conflict_point": "c", "sync_tta_s": 1.0, "seed": 0}')
        sess = Session(spec, SessionConfig(tick_rate_hz=100, snapshot_div=2))
        sess.take_outbound()
        snapshots = 0
        for _ in range(10):
            sess.run_tick()
            for _, data in sess.take_outbound():
                pkt = decode(data)
                if pkt.msg_type == 0x04:
                    snapshots += 1
                    assert len(pkt.body.records) == 0
        assert snapshots == 5

    def test_scripted_sync_arrival(self, fig6_spec):
        sess = Session(fig6_spec, SessionConfig(tick_rate_hz=100))
        paths = {i + 1: fig6_spec.map.approach_paths[a.path_id]
                 for i, a in enumerate(fig6_spec.agents)}
        arrivals = {}
        for _ in range(1300):
            sess.run_tick()
            sess.take_outbound()
            for aid, st in sess.world.items():
                if aid not in arrivals:
                    d, passed = distance_to_conflict(st, paths[aid])
                    if d <= 0.0 or passed:
                        arrivals[aid] = sess.sim_time_s
        assert len(arrivals) == 3
        for t in arrivals.values():
            assert t == pytest.approx(12.0, abs=0.05)


class TestJoin:
    def hello(self, role, source, seq=1, name="tester"):
        return Packet(Hello(role, name), Meta(seq=seq)), source

    def test_first_pedestrian_gets_slot(self):
        spec = load_named_scenario("fig6_human_car.json")
        sess = Session(spec)
        result = sess.join(AgentKind.DRIVER, "p1", "udp:1", 1)
        assert isinstance(result.body, Welcome)
        assert result.body.assigned_agent_id == 1
        assert result.body.tick_rate_hz == 100
        assert result.body.scenario_hash == sess.scenario_hash

    def test_second_same_role_rejected(self):
        spec = load_named_scenario("fig6_human_car.json")
        sess = Session(spec)
        sess.join(AgentKind.DRIVER, "p1", "udp:1", 1)
        result = sess.join(AgentKind.DRIVER, "p2", "udp:2", 1)
        assert isinstance(result.body, Event)
        assert result.body.code == EventCode.JOIN_REJECTED

    def test_policy_slot_not_joinable(self, fig6_av_spec):
        sess = Session(fig6_av_spec)
        result = sess.join(AgentKind.AUTOMATED_VEHICLE, "p1", "udp:1", 1)
        assert isinstance(result.body, Event)
        assert result.body.code == EventCode.JOIN_REJECTED

    def test_duplicate_hello_idempotent(self):
        spec = load_named_scenario("fig6_human_car.json")
        sess = Session(spec)
        first = sess.join(AgentKind.DRIVER, "p1", "udp:1", 1)
        second = sess.join(AgentKind.DRIVER, "p1", "udp:1", 1)
        assert first.body == second.body

    def test_bye_frees_slot(self):
        spec = load_named_scenario("fig6_human_car.json")
        sess = Session(spec)
        sess.join(AgentKind.DRIVER, "p1", "udp:1", 1)
        sess.apply_bye(1)
        result = sess.join(AgentKind.DRIVER, "p2", "udp:2", 1)
        assert isinstance(result.body, Welcome)


class TestInputsAndTakeover:
    def test_sequence_gating_drops_stale(self):
        spec = load_named_scenario("fig6_human_car.json")
        sess = Session(spec)
        sess.join(AgentKind.DRIVER, "p1", "udp:1", 1)
        newer = Packet(Input(DriverInput(throttle=1.0), 0),
                       Meta(agent_id=1, seq=10, kind=0))
        stale = Packet(Input(DriverInput(brake=1.0), 0),
                       Meta(agent_id=1, seq=9, kind=0))
        sess.handle_packet(newer, "udp:1")
        sess.handle_packet(stale, "udp:1")
        assert sess.runtimes[1].pending_input.control.throttle == 1.0

    def test_takeover_threshold_and_latch(self, fig6_av_spec):
        sess = Session(fig6_av_spec)
        av = sess.world[1]
        assert av.control_authority == ControlAuthority.POLICY
        # sub-threshold input: discarded
        sess.handle_packet(Packet(Input(DriverInput(brake=0.04), 0),
                                  Meta(agent_id=1, seq=1, kind=1)), "x")
        drive_ticks(sess, 1)
        assert sess.world[1].control_authority == ControlAuthority.POLICY
        # super-threshold: permanent flip
        sess.handle_packet(Packet(Input(DriverInput(brake=0.5), 0),
                                  Meta(agent_id=1, seq=2, kind=1)), "x")
        drive_ticks(sess, 1)
        assert sess.world[1].control_authority == ControlAuthority.HUMAN
        engaged = [e for e in sess.events
                   if e.code == EventCode.TAKEOVER_ENGAGE]
        assert len(engaged) == 1
        assert engaged[0].extra.get("spontaneous") is True
        drive_ticks(sess, 100)
        assert sess.world[1].control_authority == ControlAuthority.HUMAN

    def test_takeover_tti_from_request(self, fig6_av_spec):
        sess = Session(fig6_av_spec, SessionConfig(tick_rate_hz=100))
        # scenario requests takeover at t = 20 s; engage at 21.8 s
        drive_ticks(sess, 2000)
        requests = [e for e in sess.events
                    if e.code == EventCode.TAKEOVER_REQUEST]
        assert len(requests) == 1
        assert requests[0].sim_time_us == 20_000_000
        drive_ticks(sess, 180)
        sess.handle_packet(Packet(Input(DriverInput(brake=0.5), 0),
                                  Meta(agent_id=1, seq=1, kind=1)), "x")
        drive_ticks(sess, 1)
        engaged = [e for e in sess.events
                   if e.code == EventCode.TAKEOVER_ENGAGE]
        assert len(engaged) == 1
        assert engaged[0].value == pytest.approx(1.81, abs=0.02)


class TestTransitSeating:
    def make_session(self):
        return Session(load_scenario(TRANSIT_SCENARIO),
                       SessionConfig(tick_rate_hz=50))

    def test_bus_stops_and_opens_doors(self):
        # trapezoidal profile: ~17 s to the stop, 20 s dwell
        sess = self.make_session()
        drive_ticks(sess, 50 * 45)
        opened = [e for e in sess.events if e.code == EventCode.DOOR_OPEN]
        closed = [e for e in sess.events if e.code == EventCode.DOOR_CLOSE]
        assert len(opened) == 1
        assert len(closed) == 1
        dwell = (closed[0].sim_time_us - opened[0].sim_time_us) / 1e6
        assert dwell == pytest.approx(20.0, abs=0.1)

    def test_seated_request_outside_zone_warns(self):
        sess = self.make_session()
        sess.join(AgentKind.TRANSIT_USER, "p", "udp:1", 1)
        sess.handle_packet(Packet(
            Input(PedestrianInput(0.0, 0.0, seated_request=True), 0),
            Meta(agent_id=2, seq=1, kind=4)), "udp:1")
        drive_ticks(sess, 2)
        warnings = [e for e in sess.events if e.code == EventCode.WARNING]
        assert any("transit zone" in e.extra.get("reason", "")
                   for e in warnings)
        assert not sess.world[2].seated

    def test_seating_inside_zone_freezes_to_vehicle(self):
        sess = self.make_session()
        sess.join(AgentKind.TRANSIT_USER, "p", "udp:1", 1)
        # rider waits 2 m off the stop; the bus pulls in around t = 17 s
        sess.handle_packet(Packet(
            Input(PedestrianInput(0.0, 0.0, seated_request=True), 0),
            Meta(agent_id=2, seq=1, kind=4)), "udp:1")
        drive_ticks(sess, 50 * 22)
        rider = sess.world[2]
        assert rider.seated
        assert rider.kin.speed == 0.0
        seated_events = [e for e in sess.events if e.code == EventCode.SEATED]
        assert len(seated_events) == 1
        # bus departs: rider must move with the vehicle frame
        pos_before = (rider.pose.x, rider.pose.y)
        drive_ticks(sess, 50 * 25)
        rider_after = sess.world[2]
        assert rider_after.seated
        moved = math.dist(pos_before,
                          (rider_after.pose.x, rider_after.pose.y))
        assert moved > 5.0
        offset = math.dist((rider_after.pose.x, rider_after.pose.y),
                           (sess.world[1].pose.x, sess.world[1].pose.y))
        assert offset <= 3.0 + 1e-6


class TestDeterminismAndReplay:
    def scripted_run(self, spec, ticks=1500, stimuli=None, log_fp=None):
        sess = Session(spec, SessionConfig(tick_rate_hz=100), log_fp=log_fp)
        stimuli = stimuli or {}
        stream = []
        for _ in range(ticks):
            for pkt, source in stimuli.get(sess.tick, []):
                sess.handle_packet(pkt, source)
            sess.run_tick()
            for _, data in sess.take_outbound():
                stream.append(data)
        return sess, stream

    def test_identical_runs_bitwise(self, fig6_spec):
        _, stream_a = self.scripted_run(fig6_spec)
        _, stream_b = self.scripted_run(fig6_spec)
        assert stream_a == stream_b

    def test_event_order_stable(self, fig6_spec):
        sess_a, _ = self.scripted_run(fig6_spec)
        sess_b, _ = self.scripted_run(fig6_spec)
        assert [(e.tick, e.code, e.subject) for e in sess_a.events] == \
            [(e.tick, e.code, e.subject) for e in sess_b.events]

    def test_replay_round_trip_with_inputs(self):
        spec = load_named_scenario("fig6_human_car.json")
        buf = io.StringIO()
        stimuli = {
            0: [(Packet(Hello(AgentKind.DRIVER, "d"), Meta(seq=1)), "udp:1")],
            10: [(Packet(Input(DriverInput(throttle=0.8, gear=1), 0),
                         Meta(agent_id=1, seq=1, kind=0)), "udp:1")],
            400: [(Packet(Input(DriverInput(brake=0.6, gear=1), 0),
                          Meta(agent_id=1, seq=2, kind=0)), "udp:1")],
            800: [(Packet(QResponse(0, 2, 55.0),
                          Meta(agent_id=1, seq=1)), "udp:1")],
        }
        sess, _ = self.scripted_run(load_named_scenario("fig6_human_car.json"),
                                    ticks=2100, stimuli=stimuli, log_fp=buf)
        buf.seek(0)
        log = read_log(buf)
        result = replay(log)
        assert result.snapshots_checked > 2
        assert [(e.tick, e.code, e.subject, e.value) for e in result.events] \
            == [(e.tick, e.code, e.subject, e.value) for e in sess.events]

    def test_replay_detects_flipped_input_byte(self):
        buf = io.StringIO()
        stimuli = {
            0: [(Packet(Hello(AgentKind.DRIVER, "d"), Meta(seq=1)), "udp:1")],
            10: [(Packet(Input(DriverInput(throttle=0.8, gear=1), 0),
                         Meta(agent_id=1, seq=1, kind=0)), "udp:1")],
        }
        self.scripted_run(load_named_scenario("fig6_human_car.json"),
                          ticks=2100, stimuli=stimuli, log_fp=buf)
        tampered = buf.getvalue().replace('"throttle": 0.800000011920929',
                                          '"throttle": 0.899999976158142')
        assert tampered != buf.getvalue()
        log = read_log(io.StringIO(tampered))
        with pytest.raises(ReplayDivergence) as err:
            replay(log)
        assert err.value.tick >= 10

    def test_replay_hash_mismatch_rejected(self, fig6_spec):
        buf = io.StringIO()
        self.scripted_run(load_named_scenario("fig6.json"), ticks=50,
                          log_fp=buf)
        buf.seek(0)
        log = read_log(buf)
        with pytest.raises(ValueError):
            replay(log, spec=load_named_scenario("fig6_av.json"))

    def test_pure_script_replay_matches_direct(self, fig6_spec):
        buf = io.StringIO()
        sess, _ = self.scripted_run(fig6_spec, ticks=1200, log_fp=buf)
        buf.seek(0)
        result = replay(read_log(buf))
        # replay runs to the last logged snapshot anchor
        assert result.ticks == 1000
        direct = [e for e in sess.events if e.tick <= result.ticks]
        assert result.events == direct


class TestNback:
    def test_stimuli_scheduled_on_isi(self):
        spec = load_named_scenario("fig6.json")
        spec.triggers.clear()
        from junction.scenario import StartNback, TimeElapsed, Trigger
        spec.triggers.append(Trigger(TimeElapsed(0.5),
                                     StartNback(2, 8, "ped")))
        sess = Session(spec, SessionConfig(tick_rate_hz=100))
        drive_ticks(sess, 2100)
        stims = [e for e in sess.events if e.code == EventCode.NBACK_STIM]
        assert len(stims) == 8
        gaps = [(b.sim_time_us - a.sim_time_us) / 1e6
                for a, b in zip(stims, stims[1:])]
        assert all(g == pytest.approx(2.0, abs=1e-6) for g in gaps)
        start = [e for e in sess.events if e.code == EventCode.NBACK_START]
        assert len(start) == 1 and start[0].extra["n"] == 2


class TestSyncMarks:
    def test_marks_every_10s(self, fig6_spec):
        sess = Session(fig6_spec, SessionConfig(tick_rate_hz=100))
        drive_ticks(sess, 2500)
        marks = [e for e in sess.events if e.code == EventCode.SYNC_MARK]
        assert [int(m.value) for m in marks] == [0, 1, 2]
        assert [m.sim_time_us for m in marks] == [0, 10_000_000, 20_000_000]

"""Authoritative fixed-timestep session core.

Single-threaded and deterministic: world evolution is a pure function of
(scenario, seed, gated stimulus sequence).  Transports enqueue decoded
packets; the tick loop drains them between steps.  Every world-affecting
stimulus is recorded with the tick it was applied at, so a session log
replays to bitwise-identical snapshots and an identical event log.

Tick order: (1) apply gated inputs in ascending agent id, (2) AV policy
decisions, (3) dynamics steps in ascending agent id, (4) signal plan,
(5) triggers, (6) event flush, (7) snapshot broadcast.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace

from . import protocol
from .av import (
    AvContext,
    AvMemory,
    AvState,
    apply_ehmi_mask,
    av_decide,
    AvParams,
    exceeds_takeover_threshold,
    EhmiState,
)
from .dynamics import (
    CyclistParams,
    PedestrianParams,
    VehicleParams,
    step_cyclist,
    step_pedestrian,
    step_vehicle,
)
from .events import EventCode, EventLogRecord, LogHeader, LogWriter, code_for_name
from .metrics.surrogate import pair_ttc_states
from .protocol import (
    AgentRecord,
    Bye,
    Event,
    Hello,
    Input,
    Meta,
    Nback,
    Packet,
    QResponse,
    Snapshot,
    Welcome,
    encode,
    sequence_gate,
)
from .scenario import (
    AgentSpec,
    ControlledBy,
    EmitEvent,
    INSTRUMENTS,
    RequestTakeover,
    ScenarioSpec,
    SpawnScript,
    StartNback,
    StartQuestionnaire,
    TriggerContext,
    TriggerRuntime,
    scenario_hash,
    serialize,
    solve_tta_placement,
)
from .world import (
    AgentKind,
    AgentState,
    AvPolicyInput,
    ControlAuthority,
    CyclistInput,
    DriverInput,
    FLAG_BRAKING,
    FLAG_EHMI_LIGHT_SHIFT,
    FLAG_EHMI_PROJECTION,
    FLAG_HUMAN_AUTHORITY,
    FLAG_IN_CONFLICT_ZONE,
    FLAG_SEATED,
    FLAG_YIELDING,
    KinematicState,
    PedestrianInput,
    Pose2D,
    project_to_path,
)

SYNC_MARK_PERIOD_S = 10
REPLAY_SNAPSHOT_EVERY = 1000  # ticks
NBACK_ISI_S = 2.0
NBACK_SYMBOLS = b"BCDFGHJK"
BOARDING_RADIUS = 3.0
TRANSIT_ACCEL = 1.0  # m/s^2 trapezoidal speed profile


@dataclass
class SessionConfig:
    tick_rate_hz: int = 100
    snapshot_div: int = 2
    max_agents: int = 64

    def __post_init__(self):
        if not 20 <= self.tick_rate_hz <= 1000:
            raise ValueError("tick_rate_hz outside [20, 1000]")
        if self.snapshot_div < 1:
            raise ValueError("snapshot_div must be >= 1")


@dataclass
class _TransitRuntime:
    next_stop: int = 0
    dwell_left: float = 0.0
    doors_open: bool = False


@dataclass
class _AgentRuntime:
    spec: AgentSpec
    agent_id: int
    path_s: float = 0.0           # script arc position (scripted agents)
    active: bool = True
    joined_by: str | None = None  # transport source key for the human slot
    current_control: object | None = None
    pending_input: Input | None = None
    pending_fresh: bool = False
    last_seq: dict[int, int] = field(default_factory=dict)
    av_memory: AvMemory = field(default_factory=AvMemory)
    av_actuation: DriverInput | None = None
    last_ehmi: EhmiState | None = None
    takeover_request_us: int | None = None
    seat_offset: tuple[float, float, float] | None = None
    seated_on: int | None = None
    transit: _TransitRuntime | None = None


@dataclass
class _NbackTask:
    agent_id: int
    n: int
    symbols: list[int]
    next_index: int
    next_due_tick: int
    isi_ticks: int


class Session:
    """One simulation session over a loaded scenario."""

    def __init__(self, spec: ScenarioSpec, config: SessionConfig | None = None,
                 log_fp=None):
        self.spec = spec
        self.config = config or SessionConfig()
        self.scenario_hash = scenario_hash(spec)
        self.session_id = (spec.seed ^ (spec.seed >> 16)) & 0x7FFF or 1
        self.dt = 1.0 / self.config.tick_rate_hz
        self.tick = 0
        self.rng = random.Random(spec.seed)

        self.vehicle_params = VehicleParams()
        self.cyclist_params = CyclistParams()
        self.pedestrian_params = PedestrianParams()
        self.av_params = AvParams()

        self.world: dict[int, AgentState] = {}
        self.runtimes: dict[int, _AgentRuntime] = {}
        self.trigger_runtime = TriggerRuntime(spec)
        self.signal_phase: str | None = None
        self.in_conflict_zone: set[int] = set()
        self.nback_tasks: list[_NbackTask] = []
        self.events: list[EventLogRecord] = []     # full in-memory event log
        self._tick_events: list[EventLogRecord] = []
        self.outbound: list[tuple[int | None, bytes]] = []
        self._event_seq = 0
        self._mark_index = 0

        self.log = None
        if log_fp is not None:
            self.log = LogWriter(log_fp, LogHeader(
                scenario_hash=self.scenario_hash, seed=spec.seed,
                tick_rate=self.config.tick_rate_hz,
                snapshot_div=self.config.snapshot_div,
                scenario_text=serialize(spec)))

        if len(spec.agents) > self.config.max_agents:
            raise ValueError("scenario exceeds max_agents")
        placement = solve_tta_placement(spec)
        for idx, aspec in enumerate(spec.agents):
            agent_id = idx + 1
            rt = _AgentRuntime(spec=aspec, agent_id=agent_id)
            if aspec.is_transit_vehicle:
                rt.transit = _TransitRuntime()
            self.runtimes[agent_id] = rt
            if aspec.deferred:
                rt.active = False
                continue
            self._spawn(rt, placement.get(aspec.name))

        conflict_xy = spec.map.conflict_points.get(spec.conflict_point)
        self._av_contexts: dict[int, AvContext] = {}
        if conflict_xy is not None:
            vru_paths = {
                rt.agent_id: spec.map.approach_paths[rt.spec.path_id]
                for rt in self.runtimes.values()
                if rt.spec.kind in (AgentKind.CYCLIST, AgentKind.PEDESTRIAN,
                                    AgentKind.TRANSIT_USER)
                and rt.spec.path_id in spec.map.approach_paths}
            for rt in self.runtimes.values():
                if (rt.spec.kind == AgentKind.AUTOMATED_VEHICLE
                        and rt.spec.controlled_by == ControlledBy.POLICY):
                    path = spec.map.approach_paths.get(rt.spec.path_id)
                    if path is None:
                        raise ValueError(
                            f"AV {rt.spec.name} has no approach path for its lane")
                    self._av_contexts[rt.agent_id] = AvContext(
                        av_path=path, conflict_xy=conflict_xy,
                        vru_paths=vru_paths)

        # initial sync mark + snapshot anchor the log at t = 0
        self._emit(EventCode.SYNC_MARK, value=float(self._mark_index))
        self._mark_index += 1
        self._flush_events()
        if self.log:
            for frag in self.snapshot_bytes():
                self.log.snapshot(self.tick, frag)

    # --- construction helpers ------------------------------------------------

    def _spawn(self, rt: _AgentRuntime, placement_dist: float | None):
        aspec = rt.spec
        path = self.spec.map.approach_paths.get(aspec.path_id)
        if path is None:
            raise ValueError(f"agent {aspec.name}: unknown path {aspec.path_id}")
        if aspec.sync and placement_dist is not None:
            s0 = path.line.length - placement_dist
        else:
            s0 = aspec.start_s or 0.0
        pose = Pose2D(*path.line.point_at(s0), path.line.heading_at(s0))
        warm = aspec.controlled_by in (ControlledBy.SCRIPT, ControlledBy.POLICY)
        speed = aspec.target_speed if warm else 0.0
        authority = (ControlAuthority.POLICY
                     if aspec.controlled_by == ControlledBy.POLICY
                     and aspec.kind == AgentKind.AUTOMATED_VEHICLE
                     else ControlAuthority.HUMAN)
        self.world[rt.agent_id] = AgentState(
            agent_id=rt.agent_id, kind=aspec.kind, pose=pose,
            kin=KinematicState(speed=speed),
            control_authority=authority)
        rt.path_s = s0
        rt.active = True

    # --- time ----------------------------------------------------------------

    @property
    def sim_time_us(self) -> int:
        return self.tick * 1_000_000 // self.config.tick_rate_hz

    @property
    def sim_time_s(self) -> float:
        return self.sim_time_us / 1e6

    # --- external stimuli ----------------------------------------------------

    def handle_packet(self, pkt: Packet, source: str = "",
                      reply=None) -> None:
        """Feed one decoded client packet into the session (sim thread only)."""
        body = pkt.body
        if isinstance(body, Hello):
            self._handle_hello(pkt, source, reply)
        elif isinstance(body, Input):
            self._handle_input(pkt)
        elif isinstance(body, QResponse):
            self._handle_qresponse(pkt)
        elif isinstance(body, Nback):
            self._handle_nback(pkt)
        elif isinstance(body, Bye):
            self._handle_bye(pkt)
        # PING/PONG are answered by the transport layer

    def _record(self, obj: dict):
        if self.log:
            obj["tick"] = self.tick
            self.log.stimulus(obj)

    def _handle_hello(self, pkt: Packet, source: str, reply):
        body: Hello = pkt.body
        self._record({"type": "join", "seq": pkt.meta.seq, "source": source,
                      "role": int(body.role), "name": body.display_name})
        result = self.join(body.role, body.display_name, source, pkt.meta.seq)
        if reply is not None:
            reply(encode(result))
        if isinstance(result.body, Welcome):
            # authoritative picture of the world right away
            for frag in self.snapshot_bytes():
                if reply is not None:
                    reply(frag)

    def join(self, role: AgentKind, name: str, source: str, seq: int) -> Packet:
        """Assign the first unfilled matching human slot (idempotent per source)."""
        for rt in sorted(self.runtimes.values(), key=lambda r: r.agent_id):
            if rt.joined_by == source:
                # duplicate HELLO: repeat the original WELCOME
                return self._welcome(rt.agent_id)
        for rt in sorted(self.runtimes.values(), key=lambda r: r.agent_id):
            if (rt.spec.controlled_by == ControlledBy.HUMAN
                    and rt.spec.kind == role and rt.joined_by is None
                    and rt.active):
                rt.joined_by = source
                self._emit(EventCode.JOIN, subject=rt.agent_id,
                           extra={"name": name})
                return self._welcome(rt.agent_id)
        self._emit(EventCode.JOIN_REJECTED, value=float(int(role)))
        return Packet(Event(EventCode.JOIN_REJECTED, 0, 0, float(int(role))),
                      self._server_meta())

    def _welcome(self, agent_id: int) -> Packet:
        return Packet(Welcome(assigned_agent_id=agent_id,
                              tick_rate_hz=self.config.tick_rate_hz,
                              snapshot_div=self.config.snapshot_div,
                              scenario_hash=self.scenario_hash),
                      self._server_meta(agent_id=agent_id))

    def _handle_input(self, pkt: Packet):
        agent_id = pkt.meta.agent_id
        rt = self.runtimes.get(agent_id)
        if rt is None or not rt.active:
            return
        if not sequence_gate(rt.last_seq.get(protocol.MsgType.INPUT, -1),
                             pkt.meta.seq):
            return
        rt.last_seq[protocol.MsgType.INPUT] = pkt.meta.seq
        body: Input = pkt.body
        expected = self._expected_input_type(rt)
        if not isinstance(body.control, expected):
            return
        rt.pending_input = body
        rt.pending_fresh = True
        self._record({"type": "input", "agent": agent_id, "seq": pkt.meta.seq,
                      "control": _control_to_json(body.control),
                      "hint": body.client_tick_hint})

    def _expected_input_type(self, rt: _AgentRuntime):
        kind = rt.spec.kind
        if kind in (AgentKind.DRIVER, AgentKind.AUTOMATED_VEHICLE):
            return DriverInput
        if kind == AgentKind.CYCLIST:
            return CyclistInput
        return PedestrianInput

    def _handle_qresponse(self, pkt: Packet):
        agent_id = pkt.meta.agent_id
        rt = self.runtimes.get(agent_id)
        if rt is None:
            return
        if not sequence_gate(rt.last_seq.get(protocol.MsgType.QRESPONSE, -1),
                             pkt.meta.seq):
            return
        rt.last_seq[protocol.MsgType.QRESPONSE] = pkt.meta.seq
        body: QResponse = pkt.body
        problem = _validate_qresponse(body.instrument, body.item, body.value)
        self._record({"type": "qresponse", "agent": agent_id,
                      "seq": pkt.meta.seq, "instrument": body.instrument,
                      "item": body.item, "value": body.value})
        if problem:
            self._emit(EventCode.WARNING, subject=agent_id,
                       extra={"reason": problem})
            return
        self._emit(EventCode.QRESPONSE, subject=agent_id,
                   object_id=(body.instrument << 8) | body.item,
                   value=body.value,
                   extra={"instrument": body.instrument, "item": body.item})

    def _handle_nback(self, pkt: Packet):
        body: Nback = pkt.body
        if body.nkind != protocol.NBACK_RESPONSE:
            return
        agent_id = pkt.meta.agent_id
        rt = self.runtimes.get(agent_id)
        if rt is None:
            return
        if not sequence_gate(rt.last_seq.get(protocol.MsgType.NBACK, -1),
                             pkt.meta.seq):
            return
        rt.last_seq[protocol.MsgType.NBACK] = pkt.meta.seq
        self._record({"type": "nback", "agent": agent_id, "seq": pkt.meta.seq,
                      "symbol": body.symbol, "rt_hint": body.rt_hint})
        self._emit(EventCode.NBACK_RESP, subject=agent_id,
                   value=body.rt_hint, extra={"symbol": body.symbol})

    def _handle_bye(self, pkt: Packet):
        agent_id = pkt.meta.agent_id
        rt = self.runtimes.get(agent_id)
        if rt is None or rt.joined_by is None:
            return
        self._record({"type": "bye", "agent": agent_id})
        self.apply_bye(agent_id)

    def apply_bye(self, agent_id: int):
        rt = self.runtimes.get(agent_id)
        if rt is None:
            return
        rt.joined_by = None
        rt.pending_input = None
        rt.current_control = None

    # --- replay-facing stimulus application ------------------------------------

    def apply_stimulus(self, obj: dict):
        """Apply one recorded stimulus (replay path; mirrors handle_*)."""
        kind = obj["type"]
        if kind == "join":
            self.join(AgentKind(obj["role"]), obj.get("name", ""),
                      obj.get("source", ""), obj.get("seq", 0))
        elif kind == "input":
            rt = self.runtimes.get(obj["agent"])
            if rt is None:
                return
            control = _control_from_json(obj["control"])
            rt.pending_input = Input(control, obj.get("hint", 0))
            rt.pending_fresh = True
        elif kind == "qresponse":
            det = _validate_qresponse(obj["instrument"], obj["item"], obj["value"])
            if det:
                self._emit(EventCode.WARNING, subject=obj["agent"],
                           extra={"reason": det})
            else:
                self._emit(EventCode.QRESPONSE, subject=obj["agent"],
                           object_id=(obj["instrument"] << 8) | obj["item"],
                           value=obj["value"],
                           extra={"instrument": obj["instrument"],
                                  "item": obj["item"]})
        elif kind == "nback":
            self._emit(EventCode.NBACK_RESP, subject=obj["agent"],
                       value=obj["rt_hint"], extra={"symbol": obj["symbol"]})
        elif kind == "bye":
            self.apply_bye(obj["agent"])

    # --- events ----------------------------------------------------------------

    def _emit(self, code: int, subject: int = 0, object_id: int = 0,
              value: float = 0.0, extra: dict | None = None):
        self._tick_events.append(EventLogRecord(
            sim_time_us=self.sim_time_us, tick=self.tick, code=code,
            subject=subject, object_id=object_id, value=value,
            extra=extra or {}))

    def _flush_events(self):
        for rec in self._tick_events:
            self.events.append(rec)
            if self.log:
                self.log.event(rec)
            pkt = Packet(Event(rec.code, rec.subject, rec.object_id, rec.value),
                         self._server_meta(seq=self._event_seq))
            self._event_seq += 1
            self.outbound.append((None, encode(pkt)))
        self._tick_events.clear()

    def _server_meta(self, agent_id: int = protocol.BROADCAST_AGENT,
                     seq: int = 0) -> Meta:
        return Meta(session=self.session_id, agent_id=agent_id, seq=seq,
                    timestamp_us=self.sim_time_us)

    # --- snapshots ---------------------------------------------------------------

    def _agent_record(self, state: AgentState) -> AgentRecord:
        return AgentRecord(
            agent_id=state.agent_id, kind=int(state.kind), flags=state.flags,
            x=state.pose.x, y=state.pose.y, heading=state.pose.heading,
            speed=state.kin.speed, yaw_rate=state.kin.yaw_rate,
            aux=state.kin.aux)

    def snapshot_bytes(self) -> list[bytes]:
        """Serialized snapshot fragments for the current world (<= 35 each).

        Fragment seq is derived from the tick so the byte stream is a pure
        function of world history (recording and replay agree bitwise).
        """
        records = [self._agent_record(self.world[aid])
                   for aid in sorted(self.world)]
        frags = []
        chunks = [records[i:i + protocol.MAX_SNAPSHOT_AGENTS]
                  for i in range(0, len(records), protocol.MAX_SNAPSHOT_AGENTS)] \
            or [[]]
        for i, chunk in enumerate(chunks):
            more = i + 1 < len(chunks)
            meta = Meta(session=self.session_id,
                        agent_id=protocol.BROADCAST_AGENT,
                        seq=self.tick * 64 + i, timestamp_us=self.sim_time_us,
                        flags=0x01 if more else 0x00)
            frags.append(encode(Packet(
                Snapshot(self.tick, self.sim_time_us, tuple(chunk)), meta)))
        return frags

    # --- the tick ---------------------------------------------------------------

    def run_tick(self):
        dt = self.dt
        # (1) apply gated inputs
        for aid in sorted(self.runtimes):
            rt = self.runtimes[aid]
            if not rt.active or rt.pending_input is None:
                continue
            state = self.world.get(aid)
            if state is None:
                continue
            control = rt.pending_input.control
            fresh = rt.pending_fresh
            rt.pending_fresh = False
            if (state.kind == AgentKind.AUTOMATED_VEHICLE
                    and state.control_authority == ControlAuthority.POLICY):
                if isinstance(control, DriverInput) and fresh:
                    if exceeds_takeover_threshold(control):
                        self._engage_takeover(rt, control)
                    # sub-threshold input while under policy: discarded
                continue
            rt.current_control = control
            if (fresh and isinstance(control, PedestrianInput)
                    and control.seated_request and not state.seated
                    and self._transit_zone_vehicle(state) is None):
                self._emit(EventCode.WARNING, subject=aid,
                           extra={"reason": "seated_request outside transit zone"})

        # (2) AV policy decisions
        for aid in sorted(self._av_contexts):
            state = self.world.get(aid)
            rt = self.runtimes[aid]
            if state is None or state.control_authority != ControlAuthority.POLICY:
                continue
            ctx = self._av_contexts[aid]
            s, _ = project_to_path(state.pose, ctx.av_path.line)
            grade = ctx.av_path.grade_at(s)
            actuation, memory, ehmi = av_decide(
                self.world, ctx, aid, self.av_params, self.vehicle_params,
                grade, dt, rt.av_memory)
            rt.av_actuation = actuation
            rt.av_memory = memory
            masked = apply_ehmi_mask(ehmi, self.spec.ehmi_mask)
            if masked != rt.last_ehmi:
                rt.last_ehmi = masked
                self._emit(EventCode.EHMI_CHANGE, subject=aid,
                           value=float(_pack_ehmi(masked)),
                           extra={"state": memory.state.name.lower()})

        # (3) dynamics, ascending agent id
        for aid in sorted(self.world):
            self._step_agent(aid, dt)

        self.tick += 1

        # (4) signal plan
        if self.spec.signal_plan is not None:
            phase = self.spec.signal_plan.phase_at(self.sim_time_s)
            if phase != self.signal_phase:
                self.signal_phase = phase
                self._emit(EventCode.SIGNAL_PHASE,
                           value=1.0 if phase == "green" else 0.0,
                           extra={"phase": phase})

        # conflict-zone membership (post-step positions)
        self._update_conflict_zone()

        # (5) triggers against the post-step world
        ctx = TriggerContext(self.spec, self.world, self.sim_time_s,
                             self.signal_phase, self._ttc_between)
        for index, action in self.trigger_runtime.evaluate(ctx):
            self._emit(EventCode.TRIGGER_FIRED, value=float(index))
            self._run_action(action)

        # due n-back stimuli
        for task in self.nback_tasks:
            while (task.next_index < len(task.symbols)
                   and task.next_due_tick <= self.tick):
                symbol = task.symbols[task.next_index]
                self._emit(EventCode.NBACK_STIM, subject=task.agent_id,
                           value=float(symbol),
                           extra={"index": task.next_index, "n": task.n,
                                  "symbol": chr(symbol)})
                pkt = Packet(Nback(protocol.NBACK_STIMULUS, symbol),
                             self._server_meta(agent_id=task.agent_id))
                self.outbound.append((task.agent_id, encode(pkt)))
                task.next_index += 1
                task.next_due_tick += task.isi_ticks

        # periodic sensor-alignment marks
        if self.tick % (SYNC_MARK_PERIOD_S * self.config.tick_rate_hz) == 0:
            self._emit(EventCode.SYNC_MARK, value=float(self._mark_index))
            self._mark_index += 1

        # (6) flush events in emission order
        self._flush_events()

        # (7) snapshots
        if self.tick % self.config.snapshot_div == 0:
            for frag in self.snapshot_bytes():
                self.outbound.append((None, frag))
        if self.log and self.tick % REPLAY_SNAPSHOT_EVERY == 0:
            for frag in self.snapshot_bytes():
                self.log.snapshot(self.tick, frag)

    # --- per-agent stepping -------------------------------------------------------

    def _default_control(self, kind: AgentKind):
        if kind in (AgentKind.DRIVER, AgentKind.AUTOMATED_VEHICLE):
            return DriverInput()
        if kind == AgentKind.CYCLIST:
            return CyclistInput()
        return PedestrianInput()

    def _grade_at_agent(self, rt: _AgentRuntime, state: AgentState) -> float:
        path = self.spec.map.approach_paths.get(rt.spec.path_id)
        if path is None or not path.grade_profile:
            return 0.0
        s, _ = project_to_path(state.pose, path.line)
        return path.grade_at(s)

    def _step_agent(self, aid: int, dt: float):
        rt = self.runtimes[aid]
        state = self.world[aid]

        if state.seated:
            self._follow_seat(rt, state)
            self._maybe_unseat(rt)
            return

        if rt.spec.controlled_by == ControlledBy.SCRIPT:
            self._step_script(rt, state, dt)
            return

        if (state.kind == AgentKind.AUTOMATED_VEHICLE
                and state.control_authority == ControlAuthority.POLICY):
            actuation = rt.av_actuation or DriverInput()
            grade = self._grade_at_agent(rt, state)
            new = step_vehicle(state, actuation, self.vehicle_params, grade, dt)
            self.world[aid] = self._with_flags(new, rt, actuation)
            return

        control = rt.current_control or self._default_control(state.kind)
        if state.kind in (AgentKind.DRIVER, AgentKind.AUTOMATED_VEHICLE):
            grade = self._grade_at_agent(rt, state)
            new = step_vehicle(state, control, self.vehicle_params, grade, dt)
        elif state.kind == AgentKind.CYCLIST:
            grade = self._grade_at_agent(rt, state)
            new = step_cyclist(state, control, self.cyclist_params, grade, dt)
        else:
            new = step_pedestrian(state, control, self.pedestrian_params, dt)
            new = self._maybe_seat(rt, new, control)
        self.world[aid] = self._with_flags(new, rt, control)

    def _with_flags(self, state: AgentState, rt: _AgentRuntime,
                    control) -> AgentState:
        flags = state.flags & (FLAG_IN_CONFLICT_ZONE)  # zone bit kept until refresh
        braking = getattr(control, "brake", 0.0) > 0.05
        if braking:
            flags |= FLAG_BRAKING
        if state.seated:
            flags |= FLAG_SEATED
        if state.control_authority == ControlAuthority.HUMAN:
            flags |= FLAG_HUMAN_AUTHORITY
        if rt.av_memory.state in (AvState.YIELDING, AvState.STOPPED) \
                and state.control_authority == ControlAuthority.POLICY:
            flags |= FLAG_YIELDING
        if rt.last_ehmi is not None \
                and state.control_authority == ControlAuthority.POLICY:
            if rt.last_ehmi.projection_on:
                flags |= FLAG_EHMI_PROJECTION
            flags |= int(rt.last_ehmi.light_band) << FLAG_EHMI_LIGHT_SHIFT
        return state.with_flags(flags)

    def _step_script(self, rt: _AgentRuntime, state: AgentState, dt: float):
        path = self.spec.map.approach_paths[rt.spec.path_id]
        if rt.transit is not None:
            v = self._transit_speed(rt, state, dt)
        else:
            v = rt.spec.target_speed
        new_s = rt.path_s + v * dt
        rt.path_s = new_s
        line = path.line
        if new_s <= line.length:
            x, y = line.point_at(new_s)
            heading = line.heading_at(new_s)
        else:
            heading = line.heading_at(line.length)
            ex, ey = line.points[-1]
            over = new_s - line.length
            x = ex + over * math.cos(heading)
            y = ey + over * math.sin(heading)
        accel = (v - state.kin.speed) / dt
        aux = state.kin.aux
        if state.kind == AgentKind.CYCLIST:
            aux = 75.0 if v > 0.1 else 0.0  # nominal scripted cadence
        self.world[rt.agent_id] = replace(
            state, pose=Pose2D(x, y, heading),
            kin=KinematicState(v, accel, 0.0, aux))

    def _transit_speed(self, rt: _AgentRuntime, state: AgentState,
                       dt: float) -> float:
        tr = rt.transit
        stops = rt.spec.transit_stops
        v = state.kin.speed
        if tr.dwell_left > 0.0:
            tr.dwell_left -= dt
            if tr.dwell_left <= 0.0:
                tr.dwell_left = 0.0
                tr.doors_open = False
                tr.next_stop += 1
                self._emit(EventCode.DOOR_CLOSE, subject=rt.agent_id)
            return 0.0
        target = rt.spec.target_speed
        if tr.next_stop < len(stops):
            stop_s = stops[tr.next_stop].at_s
            dist = stop_s - rt.path_s
            if dist <= 0.05 and v < 0.1:
                tr.dwell_left = stops[tr.next_stop].dwell_s
                tr.doors_open = True
                self._emit(EventCode.DOOR_OPEN, subject=rt.agent_id)
                return 0.0
            # decelerate when inside the braking envelope
            if dist > 0 and v * v / (2.0 * TRANSIT_ACCEL) >= dist - 0.05:
                v = max(v - TRANSIT_ACCEL * dt, 0.0)
                if dist < 0.5 and v < 0.3:
                    v = min(v, max(dist, 0.0) * 2.0)
                return v
        return min(v + TRANSIT_ACCEL * dt, target)

    # --- transit seating ------------------------------------------------------------

    def _transit_zone_vehicle(self, state: AgentState) -> int | None:
        for aid, rt in self.runtimes.items():
            if rt.transit is None or aid not in self.world:
                continue
            veh = self.world[aid]
            if math.dist((state.pose.x, state.pose.y),
                         (veh.pose.x, veh.pose.y)) <= BOARDING_RADIUS:
                return aid
        return None

    def _maybe_seat(self, rt: _AgentRuntime, state: AgentState,
                    control: PedestrianInput) -> AgentState:
        if not control.seated_request or state.kin.speed >= 0.1:
            return state
        veh_id = self._transit_zone_vehicle(state)
        if veh_id is None:
            return state
        veh = self.world[veh_id]
        # freeze the pose into the vehicle frame
        dx = state.pose.x - veh.pose.x
        dy = state.pose.y - veh.pose.y
        cos_h = math.cos(-veh.pose.heading)
        sin_h = math.sin(-veh.pose.heading)
        rt.seat_offset = (dx * cos_h - dy * sin_h,
                          dx * sin_h + dy * cos_h,
                          state.pose.heading - veh.pose.heading)
        rt.seated_on = veh_id
        self._emit(EventCode.SEATED, subject=rt.agent_id, object_id=veh_id)
        return replace(state, seated=True,
                       kin=KinematicState(0.0, 0.0, 0.0, 0.0))

    def _follow_seat(self, rt: _AgentRuntime, state: AgentState):
        veh = self.world.get(rt.seated_on or -1)
        if veh is None or rt.seat_offset is None:
            return
        ox, oy, oh = rt.seat_offset
        cos_h = math.cos(veh.pose.heading)
        sin_h = math.sin(veh.pose.heading)
        pose = Pose2D(veh.pose.x + ox * cos_h - oy * sin_h,
                      veh.pose.y + ox * sin_h + oy * cos_h,
                      veh.pose.heading + oh)
        self.world[rt.agent_id] = replace(state, pose=pose)

    def _maybe_unseat(self, rt: _AgentRuntime):
        control = rt.current_control
        if isinstance(control, PedestrianInput) and not control.seated_request:
            state = self.world[rt.agent_id]
            rt.seat_offset = None
            rt.seated_on = None
            self.world[rt.agent_id] = replace(state, seated=False)

    # --- takeover ---------------------------------------------------------------

    def _engage_takeover(self, rt: _AgentRuntime, control: DriverInput):
        aid = rt.agent_id
        state = self.world[aid]
        self.world[aid] = replace(state,
                                  control_authority=ControlAuthority.HUMAN)
        rt.current_control = control
        tti = -1.0
        extra = {"spontaneous": rt.takeover_request_us is None}
        if rt.takeover_request_us is not None:
            tti = (self.sim_time_us - rt.takeover_request_us) / 1e6
            extra["request_t_us"] = rt.takeover_request_us
        self._emit(EventCode.TAKEOVER_ENGAGE, subject=aid, value=tti,
                   extra=extra)

    # --- trigger actions -----------------------------------------------------------

    def _run_action(self, action):
        if isinstance(action, EmitEvent):
            self._emit(code_for_name(action.code))
        elif isinstance(action, RequestTakeover):
            aid = self.spec.agent_id_of(action.agent)
            if aid is None or aid not in self.world:
                self._emit(EventCode.WARNING,
                           extra={"reason": f"takeover target {action.agent} missing"})
                return
            self.runtimes[aid].takeover_request_us = self.sim_time_us
            self._emit(EventCode.TAKEOVER_REQUEST, subject=aid)
        elif isinstance(action, StartQuestionnaire):
            aid = self.spec.agent_id_of(action.agent) if action.agent else 0
            self._emit(EventCode.QUESTIONNAIRE_START, subject=aid or 0,
                       value=float(INSTRUMENTS.index(action.instrument)),
                       extra={"instrument": action.instrument})
        elif isinstance(action, StartNback):
            aid = self.spec.agent_id_of(action.agent) if action.agent else 0
            self._start_nback(aid or 0, action.n, action.length)
        elif isinstance(action, SpawnScript):
            aid = self.spec.agent_id_of(action.agent)
            if aid is None:
                self._emit(EventCode.WARNING,
                           extra={"reason": f"spawn target {action.agent} missing"})
                return
            rt = self.runtimes[aid]
            if not rt.active:
                placement = solve_tta_placement(self.spec)
                self._spawn(rt, placement.get(rt.spec.name))

    def _start_nback(self, agent_id: int, n: int, length: int):
        symbols: list[int] = []
        for i in range(length):
            if i >= n and self.rng.random() < 0.3:
                symbols.append(symbols[i - n])
            else:
                choices = [s for s in NBACK_SYMBOLS
                           if i < n or s != symbols[i - n]]
                symbols.append(self.rng.choice(choices))
        isi_ticks = round(NBACK_ISI_S * self.config.tick_rate_hz)
        self.nback_tasks.append(_NbackTask(
            agent_id=agent_id, n=n, symbols=symbols, next_index=0,
            next_due_tick=self.tick + isi_ticks, isi_ticks=isi_ticks))
        # object_id carries the run length so wire-only clients know it
        self._emit(EventCode.NBACK_START, subject=agent_id,
                   object_id=length, value=float(n),
                   extra={"n": n, "length": length})

    # --- zone + ttc helpers ----------------------------------------------------------

    def _update_conflict_zone(self):
        pt = self.spec.map.conflict_points.get(self.spec.conflict_point)
        if pt is None:
            return
        radius = self.spec.conflict_zone_radius
        for aid in sorted(self.world):
            state = self.world[aid]
            inside = math.dist((state.pose.x, state.pose.y), pt) <= radius
            was = aid in self.in_conflict_zone
            if inside and not was:
                self.in_conflict_zone.add(aid)
                self._emit(EventCode.CONFLICT_ENTER, subject=aid)
            elif not inside and was:
                self.in_conflict_zone.discard(aid)
                self._emit(EventCode.CONFLICT_EXIT, subject=aid)
            flags = state.flags & ~FLAG_IN_CONFLICT_ZONE
            if inside:
                flags |= FLAG_IN_CONFLICT_ZONE
            if flags != state.flags:
                self.world[aid] = state.with_flags(flags)

    def _ttc_between(self, name_a: str, name_b: str) -> float | None:
        aid_a = self.spec.agent_id_of(name_a)
        aid_b = self.spec.agent_id_of(name_b)
        if aid_a is None or aid_b is None:
            return None
        sa = self.world.get(aid_a)
        sb = self.world.get(aid_b)
        if sa is None or sb is None:
            return None
        path_a = self.spec.map.approach_paths.get(self.runtimes[aid_a].spec.path_id)
        path_b = self.spec.map.approach_paths.get(self.runtimes[aid_b].spec.path_id)
        if path_a is None or path_b is None:
            return None
        return pair_ttc_states(sa, path_a, sb, path_b)

    def take_outbound(self) -> list[tuple[int | None, bytes]]:
        out = self.outbound
        self.outbound = []
        return out


# --- control input (de)serialization for the session log ------------------------

def _control_to_json(control) -> dict:
    if isinstance(control, DriverInput):
        return {"kind": "driver", "steer": control.steer_wheel,
                "throttle": control.throttle, "brake": control.brake,
                "gear": control.gear}
    if isinstance(control, CyclistInput):
        return {"kind": "cyclist", "power": control.power,
                "cadence": control.cadence, "steer": control.steer,
                "brake": control.brake, "assist": int(control.assist_level)}
    if isinstance(control, PedestrianInput):
        return {"kind": "pedestrian", "walk_speed": control.walk_speed,
                "walk_heading": control.walk_heading,
                "seated": control.seated_request}
    return {"kind": "policy"}


def _control_from_json(obj: dict):
    kind = obj["kind"]
    if kind == "driver":
        return DriverInput(obj["steer"], obj["throttle"], obj["brake"],
                           obj["gear"])
    if kind == "cyclist":
        from .world import AssistLevel
        return CyclistInput(obj["power"], obj["cadence"], obj["steer"],
                            obj["brake"], AssistLevel(obj["assist"]))
    if kind == "pedestrian":
        return PedestrianInput(obj["walk_speed"], obj["walk_heading"],
                               obj["seated"])
    return AvPolicyInput()


def _pack_ehmi(ehmi: EhmiState) -> int:
    return (int(ehmi.projection_on)
            | int(ehmi.light_band) << 1
            | int(ehmi.audio_cue) << 3
            | int(ehmi.phone_alert) << 4)


def _validate_qresponse(instrument: int, item: int, value: float) -> str | None:
    """Range checks per instrument; returns a problem string or None."""
    if instrument == 0:    # TLX: six 0-100 subscales
        if item > 5:
            return "TLX item out of range"
        if not 0.0 <= value <= 100.0:
            return "TLX value outside [0, 100]"
    elif instrument == 1:  # PANAS: twenty 1-5 items
        if item > 19:
            return "PANAS item out of range"
        if value not in (1.0, 2.0, 3.0, 4.0, 5.0):
            return "PANAS value outside 1..5"
    elif instrument == 2:  # valence-arousal pair
        if item > 1:
            return "VA item out of range"
        if not -1.0 <= value <= 1.0:
            return "VA value outside [-1, 1]"
    elif instrument == 3:  # momentary stress
        if item != 0:
            return "stress item out of range"
        if not 0.0 <= value <= 10.0:
            return "stress value outside [0, 10]"
    elif instrument == 4:  # time perception, perceived seconds
        if item != 0:
            return "time-perception item out of range"
        if value <= 0.0:
            return "perceived duration must be positive"
    else:
        return f"unknown instrument {instrument}"
    return None


# --- replay -----------------------------------------------------------------

class ReplayDivergence(Exception):
    def __init__(self, tick: int):
        super().__init__(f"replay diverged at tick {tick}")
        self.tick = tick


@dataclass
class ReplayResult:
    ticks: int
    events: list[EventLogRecord]
    snapshots_checked: int


def replay(log, spec: ScenarioSpec | None = None,
           collect_world=None) -> ReplayResult:
    """Re-run a session log; verify periodic snapshots bitwise.

    ``log`` is an events.SessionLog.  Raises ReplayDivergence naming the
    first divergent tick; raises ValueError on scenario-hash mismatch.
    ``collect_world`` (tick, world) is called after every tick when given
    (the metrics pipeline uses it to rebuild trajectories).
    """
    from .scenario import load_scenario
    if spec is None:
        if not log.header.scenario_text:
            raise ValueError("log has no embedded scenario; pass one explicitly")
        spec = load_scenario(log.header.scenario_text)
    if scenario_hash(spec) != log.header.scenario_hash:
        raise ValueError("scenario hash mismatch: log was recorded "
                         "against a different scenario")
    config = SessionConfig(tick_rate_hz=log.header.tick_rate,
                           snapshot_div=log.header.snapshot_div)
    sess = Session(spec, config)

    by_tick: dict[int, list[dict]] = {}
    for stim in log.stimuli:
        by_tick.setdefault(stim["tick"], []).append(stim)
    expected: dict[int, list[bytes]] = {}
    for tick, data in log.snapshots:
        expected.setdefault(tick, []).append(data)

    last_tick = max([t for t in expected] + [t for t in by_tick] + [0])
    checked = 0

    def check(tick: int):
        nonlocal checked
        if tick in expected:
            got = sess.snapshot_bytes()
            if got != expected[tick]:
                raise ReplayDivergence(tick)
            checked += len(got)

    check(0)
    if collect_world is not None:
        collect_world(0, sess.world)
    while sess.tick < last_tick:
        for stim in by_tick.get(sess.tick, []):
            sess.apply_stimulus(stim)
        sess.run_tick()
        sess.take_outbound()
        check(sess.tick)
        if collect_world is not None:
            collect_world(sess.tick, sess.world)
    return ReplayResult(ticks=sess.tick, events=sess.events,
                        snapshots_checked=checked)

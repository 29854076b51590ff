"""Declarative scenario format, TTA-equalized placement, and triggers.

Scenario files are UTF-8 JSON with top-level keys ``map``, ``agents``,
``conflict_point``, ``sync_tta_s``, ``triggers``, ``ehmi_mask``,
``signal_plan`` and ``seed``.  Lengths are meters, speeds m/s, times
seconds.  Loading is total: either a full spec is returned or a parse
error is raised; semantic problems are collected by ``validate`` rather
than failing fast.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum

from .world import AgentKind, ApproachPath, Crosswalk, Lane, MapError, MapModel, Polyline


class ScenarioParseError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{message} (line {line}, column {column})"
                         if line else message)
        self.line = line
        self.column = column


class PlacementError(ValueError):
    def __init__(self, agent: str, needed: float, available: float):
        super().__init__(
            f"agent {agent}: approach path too short for TTA placement "
            f"(needs {needed:.1f} m, path has {available:.1f} m)")
        self.agent = agent


class ControlledBy(Enum):
    HUMAN = "human"
    POLICY = "policy"
    SCRIPT = "script"


_KIND_NAMES = {
    "driver": AgentKind.DRIVER,
    "automated_vehicle": AgentKind.AUTOMATED_VEHICLE,
    "cyclist": AgentKind.CYCLIST,
    "pedestrian": AgentKind.PEDESTRIAN,
    "transit_user": AgentKind.TRANSIT_USER,
}
KIND_TO_NAME = {v: k for k, v in _KIND_NAMES.items()}


@dataclass
class TransitStop:
    at_s: float           # arc length along the agent's path
    dwell_s: float = 20.0


@dataclass
class AgentSpec:
    name: str
    kind: AgentKind
    path_id: str
    target_speed: float
    controlled_by: ControlledBy
    sync: bool = True          # participates in TTA placement
    start_s: float | None = None  # explicit start (non-sync agents)
    deferred: bool = False     # spawned later by a trigger
    transit_stops: list[TransitStop] = field(default_factory=list)

    @property
    def is_transit_vehicle(self) -> bool:
        return bool(self.transit_stops)


@dataclass(frozen=True)
class SignalPlan:
    green_s: float
    red_s: float
    offset_s: float = 0.0

    def phase_at(self, t: float) -> str:
        period = self.green_s + self.red_s
        tt = math.fmod(t - self.offset_s, period)
        if tt < 0:
            tt += period
        return "green" if tt < self.green_s else "red"


# --- triggers ---------------------------------------------------------------

@dataclass(frozen=True)
class AgentWithin:
    agent: str
    radius: float
    point: str


@dataclass(frozen=True)
class TimeElapsed:
    seconds: float


@dataclass(frozen=True)
class TtcBelow:
    seconds: float
    pair: tuple[str, str]


@dataclass(frozen=True)
class SignalPhaseIs:
    phase: str


Condition = AgentWithin | TimeElapsed | TtcBelow | SignalPhaseIs


@dataclass(frozen=True)
class EmitEvent:
    code: str


@dataclass(frozen=True)
class RequestTakeover:
    agent: str


@dataclass(frozen=True)
class StartQuestionnaire:
    instrument: str
    agent: str | None = None


@dataclass(frozen=True)
class StartNback:
    n: int
    length: int
    agent: str | None = None


@dataclass(frozen=True)
class SpawnScript:
    agent: str


Action = EmitEvent | RequestTakeover | StartQuestionnaire | StartNback | SpawnScript


@dataclass(frozen=True)
class Trigger:
    condition: Condition
    action: Action
    repeating: bool = False


INSTRUMENTS = ("TLX", "PANAS", "VA", "STRESS", "TIMEPERC")


@dataclass
class ScenarioSpec:
    map: MapModel
    agents: list[AgentSpec]
    conflict_point: str
    sync_tta_s: float
    triggers: list[Trigger] = field(default_factory=list)
    ehmi_mask: tuple[bool, bool, bool, bool] = (True, True, True, True)
    signal_plan: SignalPlan | None = None
    seed: int = 0
    conflict_zone_radius: float = 3.0

    def agent_by_name(self, name: str) -> AgentSpec | None:
        for a in self.agents:
            if a.name == name:
                return a
        return None

    def agent_id_of(self, name: str) -> int | None:
        for i, a in enumerate(self.agents):
            if a.name == name:
                return i + 1  # ids are 1-based; 0 is the server
        return None


# --- parsing ----------------------------------------------------------------

def _parse_polyline(obj, where: str) -> Polyline:
    try:
        return Polyline([(p[0], p[1]) for p in obj])
    except (MapError, TypeError, IndexError) as e:
        raise ScenarioParseError(f"{where}: bad polyline ({e})")


def _parse_map(obj: dict) -> MapModel:
    m = MapModel()
    for lane in obj.get("lanes", []):
        m.lanes[lane["id"]] = Lane(
            lane_id=lane["id"],
            centerline=_parse_polyline(lane["points"], f"lane {lane['id']}"),
            width=float(lane.get("width", 3.5)))
    for cw in obj.get("crosswalks", []):
        m.crosswalks[cw["id"]] = Crosswalk(
            crosswalk_id=cw["id"],
            polygon=[(float(p[0]), float(p[1])) for p in cw["polygon"]])
    for name, xy in obj.get("conflict_points", {}).items():
        m.conflict_points[name] = (float(xy[0]), float(xy[1]))
    for ap in obj.get("approach_paths", []):
        m.approach_paths[ap["id"]] = ApproachPath(
            path_id=ap["id"],
            line=_parse_polyline(ap["points"], f"path {ap['id']}"),
            conflict_point=ap.get("conflict_point", ""),
            grade_profile=[(float(s), float(g)) for s, g in ap.get("grade", [])])
    return m


def _parse_condition(obj: dict) -> Condition:
    t = obj.get("type")
    if t == "agent_within":
        return AgentWithin(obj["agent"], float(obj["radius"]), obj["point"])
    if t == "time_elapsed":
        return TimeElapsed(float(obj["seconds"]))
    if t == "ttc_below":
        pair = obj["pair"]
        return TtcBelow(float(obj["seconds"]), (pair[0], pair[1]))
    if t == "signal_phase":
        return SignalPhaseIs(obj["phase"])
    raise ScenarioParseError(f"unknown trigger condition type {t!r}")


def _parse_action(obj: dict) -> Action:
    t = obj.get("type")
    if t == "emit_event":
        return EmitEvent(str(obj["code"]))
    if t == "request_takeover":
        return RequestTakeover(obj["agent"])
    if t == "start_questionnaire":
        return StartQuestionnaire(obj["instrument"], obj.get("agent"))
    if t == "start_nback":
        return StartNback(int(obj["n"]), int(obj["length"]), obj.get("agent"))
    if t == "spawn_script":
        return SpawnScript(obj["agent"])
    raise ScenarioParseError(f"unknown trigger action type {t!r}")


def load_scenario(text: str) -> ScenarioSpec:
    """Parse a scenario document.  Raises ScenarioParseError on bad input."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(e.msg, e.lineno, e.colno) from None
    if not isinstance(doc, dict):
        raise ScenarioParseError("scenario document must be a JSON object")
    try:
        agents = []
        for a in doc.get("agents", []):
            kind = _KIND_NAMES.get(a.get("kind"))
            if kind is None:
                raise ScenarioParseError(f"unknown agent kind {a.get('kind')!r}")
            try:
                controlled = ControlledBy(a.get("controlled_by", "human"))
            except ValueError:
                raise ScenarioParseError(
                    f"unknown controlled_by {a.get('controlled_by')!r}") from None
            agents.append(AgentSpec(
                name=a["name"],
                kind=kind,
                path_id=a["path"],
                target_speed=float(a.get("target_speed", 0.0)),
                controlled_by=controlled,
                sync=bool(a.get("sync", True)),
                start_s=None if a.get("start_s") is None else float(a["start_s"]),
                deferred=bool(a.get("deferred", False)),
                transit_stops=[TransitStop(float(s["at_s"]), float(s.get("dwell_s", 20.0)))
                               for s in a.get("transit_stops", [])]))
        mask = doc.get("ehmi_mask", [True, True, True, True])
        plan = None
        if doc.get("signal_plan"):
            sp = doc["signal_plan"]
            plan = SignalPlan(float(sp["green_s"]), float(sp["red_s"]),
                              float(sp.get("offset_s", 0.0)))
        spec = ScenarioSpec(
            map=_parse_map(doc.get("map", {})),
            agents=agents,
            conflict_point=doc.get("conflict_point", ""),
            sync_tta_s=float(doc.get("sync_tta_s", 0.0)),
            triggers=[Trigger(_parse_condition(t["when"]),
                              _parse_action(t["do"]),
                              bool(t.get("repeating", False)))
                      for t in doc.get("triggers", [])],
            ehmi_mask=tuple(bool(b) for b in mask) if len(mask) == 4
            else (True, True, True, True),
            signal_plan=plan,
            seed=int(doc.get("seed", 0)),
            conflict_zone_radius=float(doc.get("conflict_zone_radius", 3.0)))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ScenarioParseError):
            raise
        raise ScenarioParseError(f"malformed scenario: {e}") from None
    return spec


def _condition_to_json(c: Condition) -> dict:
    if isinstance(c, AgentWithin):
        return {"type": "agent_within", "agent": c.agent,
                "radius": c.radius, "point": c.point}
    if isinstance(c, TimeElapsed):
        return {"type": "time_elapsed", "seconds": c.seconds}
    if isinstance(c, TtcBelow):
        return {"type": "ttc_below", "seconds": c.seconds, "pair": list(c.pair)}
    return {"type": "signal_phase", "phase": c.phase}


def _action_to_json(a: Action) -> dict:
    if isinstance(a, EmitEvent):
        return {"type": "emit_event", "code": a.code}
    if isinstance(a, RequestTakeover):
        return {"type": "request_takeover", "agent": a.agent}
    if isinstance(a, StartQuestionnaire):
        out = {"type": "start_questionnaire", "instrument": a.instrument}
        if a.agent:
            out["agent"] = a.agent
        return out
    if isinstance(a, StartNback):
        out = {"type": "start_nback", "n": a.n, "length": a.length}
        if a.agent:
            out["agent"] = a.agent
        return out
    return {"type": "spawn_script", "agent": a.agent}


def to_json_dict(spec: ScenarioSpec) -> dict:
    """Canonical JSON form; load(serialize(spec)) equals spec."""
    agents = []
    for a in spec.agents:
        obj: dict = {"name": a.name, "kind": KIND_TO_NAME[a.kind],
                     "path": a.path_id, "target_speed": a.target_speed,
                     "controlled_by": a.controlled_by.value}
        if not a.sync:
            obj["sync"] = False
        if a.start_s is not None:
            obj["start_s"] = a.start_s
        if a.deferred:
            obj["deferred"] = True
        if a.transit_stops:
            obj["transit_stops"] = [{"at_s": s.at_s, "dwell_s": s.dwell_s}
                                    for s in a.transit_stops]
        agents.append(obj)
    m = spec.map
    doc = {
        "map": {
            "lanes": [{"id": l.lane_id, "width": l.width,
                       "points": [list(p) for p in l.centerline.points]}
                      for l in m.lanes.values()],
            "crosswalks": [{"id": c.crosswalk_id,
                            "polygon": [list(p) for p in c.polygon]}
                           for c in m.crosswalks.values()],
            "conflict_points": {k: list(v) for k, v in m.conflict_points.items()},
            "approach_paths": [{"id": p.path_id,
                                "points": [list(q) for q in p.line.points],
                                "conflict_point": p.conflict_point,
                                "grade": [list(g) for g in p.grade_profile]}
                               for p in m.approach_paths.values()],
        },
        "agents": agents,
        "conflict_point": spec.conflict_point,
        "sync_tta_s": spec.sync_tta_s,
        "triggers": [{"when": _condition_to_json(t.condition),
                      "do": _action_to_json(t.action),
                      "repeating": t.repeating}
                     for t in spec.triggers],
        "ehmi_mask": list(spec.ehmi_mask),
        "signal_plan": None if spec.signal_plan is None else {
            "green_s": spec.signal_plan.green_s,
            "red_s": spec.signal_plan.red_s,
            "offset_s": spec.signal_plan.offset_s},
        "seed": spec.seed,
        "conflict_zone_radius": spec.conflict_zone_radius,
    }
    return doc


def serialize(spec: ScenarioSpec) -> str:
    return json.dumps(to_json_dict(spec), indent=2, sort_keys=True)


def scenario_hash(spec: ScenarioSpec) -> int:
    """64-bit content hash of the canonical serialized form."""
    canonical = json.dumps(to_json_dict(spec), sort_keys=True,
                           separators=(",", ":"))
    digest = hashlib.sha256(canonical.encode()).digest()
    return int.from_bytes(digest[:8], "little")


# --- validation -------------------------------------------------------------

def validate(spec: ScenarioSpec) -> list[str]:
    """Semantic diagnostics: dangling references, unit errors, short paths."""
    diags = list(spec.map.validate())
    if spec.sync_tta_s <= 0:
        diags.append(f"sync_tta_s must be positive (got {spec.sync_tta_s})")
    if spec.conflict_point and spec.conflict_point not in spec.map.conflict_points:
        diags.append(f"unknown conflict point {spec.conflict_point}")
    seen = set()
    for a in spec.agents:
        if a.name in seen:
            diags.append(f"duplicate agent name {a.name}")
        seen.add(a.name)
        path = spec.map.approach_paths.get(a.path_id)
        if path is None:
            diags.append(f"agent {a.name}: unknown path {a.path_id}")
            continue
        if a.sync:
            if a.target_speed <= 0:
                diags.append(
                    f"agent {a.name}: synchronized agents need target_speed > 0")
            elif spec.sync_tta_s > 0:
                need = a.target_speed * spec.sync_tta_s
                if need > path.line.length + 1e-9:
                    diags.append(str(PlacementError(a.name, need, path.line.length)))
        elif a.start_s is not None and not 0 <= a.start_s <= path.line.length:
            diags.append(f"agent {a.name}: start_s outside path")
        for stop in a.transit_stops:
            if not 0 <= stop.at_s <= path.line.length:
                diags.append(f"agent {a.name}: transit stop at {stop.at_s} outside path")
    for i, t in enumerate(spec.triggers):
        c, act = t.condition, t.action
        if isinstance(c, AgentWithin):
            if spec.agent_by_name(c.agent) is None:
                diags.append(f"trigger {i}: unknown agent {c.agent}")
            if c.point not in spec.map.conflict_points:
                diags.append(f"trigger {i}: unknown point {c.point}")
        if isinstance(c, TtcBelow):
            for name in c.pair:
                if spec.agent_by_name(name) is None:
                    diags.append(f"trigger {i}: unknown agent {name}")
        if isinstance(c, SignalPhaseIs):
            if spec.signal_plan is None:
                diags.append(f"trigger {i}: signal_phase without a signal_plan")
            elif c.phase not in ("green", "red"):
                diags.append(f"trigger {i}: unknown phase {c.phase}")
        if isinstance(act, (RequestTakeover, SpawnScript)):
            if spec.agent_by_name(act.agent) is None:
                diags.append(f"trigger {i}: unknown agent {act.agent}")
        if isinstance(act, StartQuestionnaire) and act.instrument not in INSTRUMENTS:
            diags.append(f"trigger {i}: unknown instrument {act.instrument}")
        if isinstance(act, StartNback) and not (1 <= act.n <= 4 and act.length > act.n):
            diags.append(f"trigger {i}: bad n-back configuration")
    if len(spec.ehmi_mask) != 4:
        diags.append("ehmi_mask must have 4 entries")
    if spec.signal_plan is not None:
        if spec.signal_plan.green_s <= 0 or spec.signal_plan.red_s <= 0:
            diags.append("signal plan phases must be positive")
    return diags


# --- TTA placement ----------------------------------------------------------

def solve_tta_placement(spec: ScenarioSpec) -> dict[str, float]:
    """Initial distance-to-conflict for every synchronized agent.

    Places each agent so distance = target_speed * sync_tta_s measured
    backward from the conflict point along its approach path.  Idealized
    constant speeds, as the placement chart assumes: scripted agents are
    warm-started at their target speed, so arrival stays synchronized;
    human agents inherit the placement without the arrival guarantee.
    """
    out: dict[str, float] = {}
    for a in spec.agents:
        if not a.sync:
            continue
        path = spec.map.approach_paths.get(a.path_id)
        if path is None:
            raise PlacementError(a.name, 0.0, 0.0)
        d = a.target_speed * spec.sync_tta_s
        if d > path.line.length + 1e-9:
            raise PlacementError(a.name, d, path.line.length)
        out[a.name] = d
    return out


# --- trigger evaluation -----------------------------------------------------

class TriggerContext:
    """What a trigger condition may observe after a tick.

    ``ttc_fn`` computes the pairwise TTC between two named agents (the
    server wires it to the surrogate-metric formulation).
    """

    def __init__(self, spec: ScenarioSpec, world, sim_time_s: float,
                 signal_phase: str | None, ttc_fn):
        self.spec = spec
        self.world = world
        self.sim_time_s = sim_time_s
        self.signal_phase = signal_phase
        self.ttc_fn = ttc_fn

    def _holds(self, c: Condition) -> bool:
        if isinstance(c, TimeElapsed):
            return self.sim_time_s >= c.seconds
        if isinstance(c, AgentWithin):
            aid = self.spec.agent_id_of(c.agent)
            state = self.world.get(aid)
            pt = self.spec.map.conflict_points.get(c.point)
            if state is None or pt is None:
                return False
            return math.dist((state.pose.x, state.pose.y), pt) <= c.radius
        if isinstance(c, TtcBelow):
            ttc = self.ttc_fn(c.pair[0], c.pair[1])
            return ttc is not None and ttc < c.seconds
        if isinstance(c, SignalPhaseIs):
            return self.signal_phase == c.phase
        return False


class TriggerRuntime:
    """Firing bookkeeping across ticks.

    Triggers fire on the rising edge of their condition; non-repeating
    triggers fire at most once per session, repeating ones on every new
    rising edge.
    """

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.fired: set[int] = set()
        self._was_true: dict[int, bool] = {}

    def evaluate(self, ctx: TriggerContext) -> list[tuple[int, Action]]:
        actions: list[tuple[int, Action]] = []
        for i, t in enumerate(self.spec.triggers):
            holds = ctx._holds(t.condition)
            rising = holds and not self._was_true.get(i, False)
            self._was_true[i] = holds
            if not rising:
                continue
            if i in self.fired and not t.repeating:
                continue
            self.fired.add(i)
            actions.append((i, t.action))
        return actions


def evaluate_triggers(spec: ScenarioSpec, ctx: TriggerContext,
                      runtime: TriggerRuntime) -> list[tuple[int, Action]]:
    """Evaluate triggers in declaration order against the post-step world."""
    return runtime.evaluate(ctx)

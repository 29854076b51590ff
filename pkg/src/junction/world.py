"""Domain types shared by every part of the simulator.

World frame: right-handed, meters, +x east, +y north, heading 0 = +x,
heading normalized into (-pi, pi].  Lateral offsets are positive to the
left of the direction of travel.
"""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, field, replace
from enum import IntEnum

from . import kernels

TWO_PI = 6.283185307179586


class AgentKind(IntEnum):
    DRIVER = 0
    AUTOMATED_VEHICLE = 1
    CYCLIST = 2
    PEDESTRIAN = 3
    TRANSIT_USER = 4


# Hard speed caps per agent kind, m/s.
MAX_SPEED = {
    AgentKind.DRIVER: 60.0,
    AgentKind.AUTOMATED_VEHICLE: 60.0,
    AgentKind.CYCLIST: 20.0,
    AgentKind.PEDESTRIAN: 4.0,
    AgentKind.TRANSIT_USER: 4.0,
}

# Half-lengths used for conflict-occupancy computations, m.
HALF_LENGTH = {
    AgentKind.DRIVER: 2.25,
    AgentKind.AUTOMATED_VEHICLE: 2.25,
    AgentKind.CYCLIST: 0.9,
    AgentKind.PEDESTRIAN: 0.3,
    AgentKind.TRANSIT_USER: 0.3,
}


class ControlAuthority(IntEnum):
    HUMAN = 0
    POLICY = 1


class AssistLevel(IntEnum):
    OFF = 0
    ECO = 1
    TOUR = 2
    TURBO = 3


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi].  Idempotent."""
    t = math.fmod(theta, TWO_PI)
    if t <= -math.pi:
        t += TWO_PI
    elif t > math.pi:
        t -= TWO_PI
    return t


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("non-finite position")
        object.__setattr__(self, "heading", normalize_angle(self.heading))


@dataclass(frozen=True)
class KinematicState:
    speed: float = 0.0      # m/s, signed (reverse gear)
    accel: float = 0.0      # m/s^2
    yaw_rate: float = 0.0   # rad/s
    aux: float = 0.0        # cadence rpm / step rate Hz / 0


# AgentState.flags bits (also the wire AgentRecord flag byte).
FLAG_YIELDING = 0x01
FLAG_BRAKING = 0x02
FLAG_IN_CONFLICT_ZONE = 0x04
FLAG_SEATED = 0x08
FLAG_HUMAN_AUTHORITY = 0x10
FLAG_EHMI_PROJECTION = 0x20
FLAG_EHMI_LIGHT_SHIFT = 6  # two bits: 0 off, 1 aware, 2 yielding


@dataclass(frozen=True)
class AgentState:
    agent_id: int
    kind: AgentKind
    pose: Pose2D = field(default_factory=Pose2D)
    kin: KinematicState = field(default_factory=KinematicState)
    seated: bool = False
    control_authority: ControlAuthority = ControlAuthority.HUMAN
    flags: int = 0

    def __post_init__(self):
        if self.seated and abs(self.kin.speed) > 0.0:
            raise ValueError("seated agent must have zero speed")
        if (self.control_authority == ControlAuthority.POLICY
                and self.kind != AgentKind.AUTOMATED_VEHICLE):
            raise ValueError("policy authority only valid for automated vehicles")
        if abs(self.kin.speed) > MAX_SPEED[self.kind] + 1e-9:
            raise ValueError(
                f"speed {self.kin.speed} exceeds cap for {self.kind.name}")

    def with_flags(self, flags: int) -> AgentState:
        return replace(self, flags=flags)


# --- control inputs -------------------------------------------------------

MAX_STEER_WHEEL = 7.854   # rad, ~2.5 turns lock to lock
MAX_POWER_W = 2000.0
MAX_CADENCE_RPM = 300.0
MAX_CYCLIST_STEER = 1.5708


class InputValidationError(ValueError):
    """Raised at the protocol boundary for out-of-range control inputs."""


def _check(ok: bool, what: str):
    if not ok:
        raise InputValidationError(what)


@dataclass(frozen=True)
class DriverInput:
    steer_wheel: float = 0.0  # rad at the wheel rim
    throttle: float = 0.0     # [0, 1]
    brake: float = 0.0        # [0, 1]
    gear: int = 1             # -1 reverse, 0 neutral, 1..6 forward

    def validate(self):
        _check(math.isfinite(self.steer_wheel)
               and abs(self.steer_wheel) <= MAX_STEER_WHEEL, "steer_wheel out of range")
        _check(0.0 <= self.throttle <= 1.0, "throttle out of range")
        _check(0.0 <= self.brake <= 1.0, "brake out of range")
        _check(self.gear in range(-1, 7), "gear out of range")


@dataclass(frozen=True)
class CyclistInput:
    power: float = 0.0        # W
    cadence: float = 0.0      # rpm
    steer: float = 0.0        # rad at the road wheel
    brake: float = 0.0        # [0, 1]
    assist_level: AssistLevel = AssistLevel.OFF

    def validate(self):
        _check(0.0 <= self.power <= MAX_POWER_W, "power out of range")
        _check(0.0 <= self.cadence <= MAX_CADENCE_RPM, "cadence out of range")
        _check(math.isfinite(self.steer)
               and abs(self.steer) <= MAX_CYCLIST_STEER, "steer out of range")
        _check(0.0 <= self.brake <= 1.0, "brake out of range")
        _check(isinstance(self.assist_level, AssistLevel), "bad assist level")


@dataclass(frozen=True)
class PedestrianInput:
    walk_speed: float = 0.0    # m/s, >= 0 (clamped to 4 by dynamics)
    walk_heading: float = 0.0  # rad
    seated_request: bool = False

    def validate(self):
        _check(math.isfinite(self.walk_speed) and self.walk_speed >= 0.0,
               "walk_speed out of range")
        _check(math.isfinite(self.walk_heading), "walk_heading not finite")


@dataclass(frozen=True)
class AvPolicyInput:
    """Empty marker: the policy generates actuation internally."""

    def validate(self):
        pass


ControlInput = DriverInput | CyclistInput | PedestrianInput | AvPolicyInput


def input_kind_for(kind: AgentKind, authority: ControlAuthority) -> type:
    if kind in (AgentKind.DRIVER, AgentKind.AUTOMATED_VEHICLE):
        if kind == AgentKind.AUTOMATED_VEHICLE and authority == ControlAuthority.POLICY:
            return AvPolicyInput
        return DriverInput
    if kind == AgentKind.CYCLIST:
        return CyclistInput
    return PedestrianInput


# --- map geometry ---------------------------------------------------------

class MapError(ValueError):
    pass


class Polyline:
    """Piecewise-linear path with cached cumulative arc length."""

    def __init__(self, points: list[tuple[float, float]]):
        if len(points) < 2:
            raise MapError("polyline needs at least 2 vertices")
        self.points = [(float(x), float(y)) for x, y in points]
        self.cum = [0.0]
        for (x0, y0), (x1, y1) in zip(self.points, self.points[1:]):
            seg = math.sqrt((x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0))
            if seg == 0.0:
                raise MapError("degenerate zero-length segment")
            self.cum.append(self.cum[-1] + seg)
        self.length = self.cum[-1]
        # flat double buffers consumed by the projection kernel
        self._xs = array("d", (p[0] for p in self.points))
        self._ys = array("d", (p[1] for p in self.points))
        self._cum = array("d", self.cum)

    def point_at(self, s: float) -> tuple[float, float]:
        """World point at arc length s (clamped to [0, length])."""
        s = min(max(s, 0.0), self.length)
        # linear scan: paths are short (tens of vertices)
        for i in range(len(self.cum) - 1):
            if s <= self.cum[i + 1]:
                t = (s - self.cum[i]) / (self.cum[i + 1] - self.cum[i])
                x0, y0 = self.points[i]
                x1, y1 = self.points[i + 1]
                return (x0 + t * (x1 - x0), y0 + t * (y1 - y0))
        return self.points[-1]

    def heading_at(self, s: float) -> float:
        s = min(max(s, 0.0), self.length)
        for i in range(len(self.cum) - 1):
            if s <= self.cum[i + 1]:
                x0, y0 = self.points[i]
                x1, y1 = self.points[i + 1]
                return math.atan2(y1 - y0, x1 - x0)
        x0, y0 = self.points[-2]
        x1, y1 = self.points[-1]
        return math.atan2(y1 - y0, x1 - x0)


@dataclass
class Lane:
    lane_id: str
    centerline: Polyline
    width: float = 3.5


@dataclass
class Crosswalk:
    crosswalk_id: str
    polygon: list[tuple[float, float]]


@dataclass
class ApproachPath:
    path_id: str
    line: Polyline
    conflict_point: str
    # piecewise-linear grade profile: (arc_length, grade) knots
    grade_profile: list[tuple[float, float]] = field(default_factory=list)

    def grade_at(self, s: float) -> float:
        prof = self.grade_profile
        if not prof:
            return 0.0
        if s <= prof[0][0]:
            return prof[0][1]
        for (s0, g0), (s1, g1) in zip(prof, prof[1:]):
            if s <= s1:
                t = (s - s0) / (s1 - s0)
                return g0 + t * (g1 - g0)
        return prof[-1][1]


@dataclass
class MapModel:
    lanes: dict[str, Lane] = field(default_factory=dict)
    crosswalks: dict[str, Crosswalk] = field(default_factory=dict)
    conflict_points: dict[str, tuple[float, float]] = field(default_factory=dict)
    approach_paths: dict[str, ApproachPath] = field(default_factory=dict)

    def validate(self) -> list[str]:
        """Structural checks; returns human-readable problems."""
        problems = []
        for path in self.approach_paths.values():
            cp = self.conflict_points.get(path.conflict_point)
            if cp is None:
                problems.append(
                    f"path {path.path_id}: unknown conflict point {path.conflict_point}")
                continue
            ex, ey = path.line.points[-1]
            if math.dist((ex, ey), cp) > 0.01:
                problems.append(
                    f"path {path.path_id}: endpoint not on conflict point "
                    f"{path.conflict_point} (off by {math.dist((ex, ey), cp):.3f} m)")
            for s, g in path.grade_profile:
                if not -0.2 <= g <= 0.2:
                    problems.append(
                        f"path {path.path_id}: grade {g} at s={s} outside [-0.2, 0.2]")
        return problems


# --- geometry operations --------------------------------------------------

def project_to_path(pose: Pose2D, path: Polyline) -> tuple[float, float]:
    """Project a pose onto a polyline.

    Returns (arc_length, lateral_offset); the offset is positive left of
    the travel direction.  Equidistant candidates resolve to the smallest
    arc length.
    """
    s, lat, _ = kernels.project_point(path._xs, path._ys, path._cum,
                                      pose.x, pose.y)
    return s, lat


def distance_to_conflict(state: AgentState, path: ApproachPath) -> tuple[float, bool]:
    """Remaining distance along the approach path to its conflict point.

    Returns (distance, passed): distance is never negative; passed is set
    once the projection sits at the path end and the agent has moved past
    the conflict point along the travel direction.
    """
    s, _ = project_to_path(state.pose, path.line)
    remaining = path.line.length - s
    if remaining > 0.0:
        return remaining, False
    # at the end vertex: past the conflict iff the agent is downstream of it
    ex, ey = path.line.points[-1]
    hx = math.cos(path.line.heading_at(path.line.length))
    hy = math.sin(path.line.heading_at(path.line.length))
    along = (state.pose.x - ex) * hx + (state.pose.y - ey) * hy
    return 0.0, along > 0.0

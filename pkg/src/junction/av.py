"""Automated-vehicle behavior: yielding state machine, eHMI channels,
and the human takeover threshold.

The decision function is pure; the per-AV memory (current state plus the
clear-zone timer) is owned by the server and threaded through each call.

State graph:

    Cruising -> Approaching      VRU near the conflict point, AV TTA close
    Approaching -> Cruising      condition vanished
    Approaching -> Yielding      TTC/TTA overlap within ttc_yield
    Yielding -> Stopped          speed < 0.05 m/s
    Yielding -> Resuming         zone clear for resume_clear_time
    Stopped -> Resuming          zone clear for resume_clear_time
    Resuming -> Yielding         overlap condition reappears
    Resuming -> Cruising         speed back at cruise
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

from .world import (
    AgentKind,
    AgentState,
    ApproachPath,
    DriverInput,
    HALF_LENGTH,
    distance_to_conflict,
    project_to_path,
)
from .dynamics import GRAVITY, VehicleParams


class AvState(IntEnum):
    CRUISING = 0
    APPROACHING = 1
    YIELDING = 2
    STOPPED = 3
    RESUMING = 4


class LightBand(IntEnum):
    OFF = 0
    AWARE = 1
    YIELDING = 2


class AudioCue(IntEnum):
    NONE = 0
    CHIME = 1


@dataclass(frozen=True)
class EhmiState:
    projection_on: bool = False
    light_band: LightBand = LightBand.OFF
    audio_cue: AudioCue = AudioCue.NONE
    phone_alert: bool = False


# Channel table, one row per AV state.
_EHMI_TABLE = {
    AvState.CRUISING: EhmiState(False, LightBand.OFF, AudioCue.NONE, False),
    AvState.APPROACHING: EhmiState(False, LightBand.AWARE, AudioCue.NONE, True),
    AvState.YIELDING: EhmiState(True, LightBand.YIELDING, AudioCue.CHIME, True),
    AvState.STOPPED: EhmiState(True, LightBand.YIELDING, AudioCue.NONE, False),
    AvState.RESUMING: EhmiState(False, LightBand.AWARE, AudioCue.NONE, False),
}


def set_ehmi(av_state: AvState) -> EhmiState:
    """eHMI channel activation for a given AV state (pure table lookup).

    The chime entry for Yielding is rendered once per state entry: the
    server only broadcasts an eHMI event when the state changes.
    """
    return _EHMI_TABLE[av_state]


def apply_ehmi_mask(ehmi: EhmiState, mask: tuple[bool, bool, bool, bool]) -> EhmiState:
    """Disable channels per the scenario's experimental-condition mask.

    Mask order: (projection, light band, audio, phone alert).
    """
    return EhmiState(
        projection_on=ehmi.projection_on and mask[0],
        light_band=ehmi.light_band if mask[1] else LightBand.OFF,
        audio_cue=ehmi.audio_cue if mask[2] else AudioCue.NONE,
        phone_alert=ehmi.phone_alert and mask[3],
    )


@dataclass(frozen=True)
class AvParams:
    v_cruise: float = 8.333333333333334  # m/s (30 km/h)
    detect_radius: float = 35.0          # m around the conflict point
    ttc_yield: float = 4.0               # s
    stop_buffer: float = 2.0             # m, front bumper to conflict
    comfort_decel: float = 2.5           # m/s^2
    resume_clear_time: float = 1.5       # s of continuous clearance

    def __post_init__(self):
        for name in ("v_cruise", "detect_radius", "ttc_yield", "stop_buffer",
                     "comfort_decel", "resume_clear_time"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.stop_buffer >= self.detect_radius:
            raise ValueError("stop_buffer must be below detect_radius")


# Takeover engagement thresholds.
TAKEOVER_STEER_RAD = 0.1
TAKEOVER_BRAKE = 0.05
TAKEOVER_THROTTLE = 0.05

PURE_PURSUIT_LOOKAHEAD = 8.0  # m
# Extra stopping margin past the buffer, absorbs Euler discretization.
STOP_MARGIN = 0.55
# VRUs slower than this count as stationary (infinite TTA).
MIN_MOVING_SPEED = 0.05
CONFLICT_ZONE_RADIUS = 3.0


def exceeds_takeover_threshold(inp: DriverInput) -> bool:
    return (abs(inp.steer_wheel) > TAKEOVER_STEER_RAD
            or inp.brake > TAKEOVER_BRAKE
            or inp.throttle > TAKEOVER_THROTTLE)


@dataclass(frozen=True)
class AvMemory:
    state: AvState = AvState.CRUISING
    clear_time: float = 0.0  # s the conflict zone has been continuously clear


@dataclass
class AvContext:
    """Scenario wiring the policy needs: paths and the shared conflict point."""
    av_path: ApproachPath
    conflict_xy: tuple[float, float]
    vru_paths: dict[int, ApproachPath] = field(default_factory=dict)


def _tta(dist: float, speed: float) -> float:
    if speed <= MIN_MOVING_SPEED:
        return math.inf
    return dist / speed


def _crossing_ttc(d_a: float, v_a: float, half_a: float,
                  d_b: float, v_b: float, half_b: float) -> float:
    """Onset of joint conflict-point occupancy under constant speeds."""
    if v_a <= MIN_MOVING_SPEED or v_b <= MIN_MOVING_SPEED:
        return math.inf
    enter_a = (d_a - half_a) / v_a
    exit_a = (d_a + half_a) / v_a
    enter_b = (d_b - half_b) / v_b
    exit_b = (d_b + half_b) / v_b
    onset = max(enter_a, enter_b)
    if onset <= min(exit_a, exit_b):
        return max(onset, 0.0)
    return math.inf


def _vru_assessment(world: dict[int, AgentState], ctx: AvContext,
                    av_dist: float, av_speed: float,
                    params: AvParams) -> tuple[bool, bool, bool]:
    """Returns (vru_near, overlap, zone_clear) for the current world."""
    av_tta = _tta(av_dist, av_speed)
    vru_near = False
    overlap = False
    zone_clear = True
    half_av = HALF_LENGTH[AgentKind.AUTOMATED_VEHICLE]
    cx, cy = ctx.conflict_xy
    for aid, path in ctx.vru_paths.items():
        vru = world.get(aid)
        if vru is None:
            continue
        dist, passed = distance_to_conflict(vru, path)
        euclid = math.dist((vru.pose.x, vru.pose.y), (cx, cy))
        if euclid <= CONFLICT_ZONE_RADIUS:
            zone_clear = False
        if passed:
            continue
        vru_tta = _tta(dist, vru.kin.speed)
        if vru_tta <= 2.0 * params.ttc_yield:
            zone_clear = False
        if euclid <= params.detect_radius:
            vru_near = True
            ttc = _crossing_ttc(av_dist, av_speed, half_av,
                                dist, vru.kin.speed, HALF_LENGTH[vru.kind])
            tta_gap = abs(av_tta - vru_tta) if math.isfinite(av_tta) \
                and math.isfinite(vru_tta) else math.inf
            if ttc < params.ttc_yield or tta_gap < params.ttc_yield:
                overlap = True
    return vru_near, overlap, zone_clear


def _pure_pursuit_steer(state: AgentState, ctx: AvContext,
                        vparams: VehicleParams) -> float:
    """Steering-wheel angle tracking the lane centerline (8 m lookahead)."""
    line = ctx.av_path.line
    s, _ = project_to_path(state.pose, line)
    tx, ty = line.point_at(min(s + PURE_PURSUIT_LOOKAHEAD, line.length))
    dx = tx - state.pose.x
    dy = ty - state.pose.y
    ld = math.sqrt(dx * dx + dy * dy)
    if ld < 0.5:
        return 0.0
    alpha = math.atan2(dy, dx) - state.pose.heading
    delta = math.atan2(2.0 * vparams.wheelbase * math.sin(alpha), ld)
    delta = min(max(delta, -vparams.max_road_wheel), vparams.max_road_wheel)
    return delta * vparams.steer_ratio


def _speed_hold(v: float, v_target: float, grade: float,
                vparams: VehicleParams) -> tuple[float, float]:
    """P speed controller with drag/grade feedforward -> (throttle, brake)."""
    a_des = 1.0 * (v_target - v) + vparams.drag_coeff * v + GRAVITY * grade
    if a_des >= 0.0:
        return min(a_des / vparams.a_max, 1.0), 0.0
    return 0.0, min(-a_des / vparams.b_max, 1.0)


def av_decide(world: dict[int, AgentState], ctx: AvContext, av_id: int,
              params: AvParams, vparams: VehicleParams, grade: float,
              dt: float, memory: AvMemory) -> tuple[DriverInput, AvMemory, EhmiState]:
    """One policy decision for an automated vehicle under Policy authority.

    Returns the actuation to feed through the normal vehicle dynamics,
    the updated memory, and the eHMI channel state.
    """
    av = world[av_id]
    v = av.kin.speed
    av_dist, _av_passed = distance_to_conflict(av, ctx.av_path)
    av_tta = _tta(av_dist, v)
    vru_near, overlap, zone_clear = _vru_assessment(
        world, ctx, av_dist, v, params)

    clear_time = memory.clear_time + dt if zone_clear else 0.0
    state = memory.state

    if state == AvState.CRUISING:
        if vru_near and av_tta < 2.0 * params.ttc_yield:
            state = AvState.APPROACHING
    elif state == AvState.APPROACHING:
        if overlap:
            state = AvState.YIELDING
        elif not (vru_near and av_tta < 2.0 * params.ttc_yield):
            state = AvState.CRUISING
    elif state == AvState.YIELDING:
        if v < 0.05:
            state = AvState.STOPPED
        elif clear_time >= params.resume_clear_time:
            state = AvState.RESUMING
    elif state == AvState.STOPPED:
        if clear_time >= params.resume_clear_time:
            state = AvState.RESUMING
    elif state == AvState.RESUMING:
        if overlap:
            state = AvState.YIELDING
        elif v >= params.v_cruise - 0.1:
            state = AvState.CRUISING

    steer = _pure_pursuit_steer(av, ctx, vparams)
    stop_target = (params.stop_buffer
                   + HALF_LENGTH[AgentKind.AUTOMATED_VEHICLE] + STOP_MARGIN)

    if state in (AvState.CRUISING, AvState.APPROACHING, AvState.RESUMING):
        throttle, brake = _speed_hold(v, params.v_cruise, grade, vparams)
    elif state == AvState.YIELDING:
        margin = av_dist - stop_target
        if margin <= 0.0:
            brake = 1.0
            throttle = 0.0
        else:
            a_req = v * v / (2.0 * margin)
            if a_req >= params.comfort_decel:
                brake = min(a_req, vparams.b_max) / vparams.b_max
                throttle = 0.0
            else:
                throttle, brake = _speed_hold(v, v, grade, vparams)
    else:  # STOPPED
        throttle, brake = 0.0, 0.3

    actuation = DriverInput(steer_wheel=steer, throttle=throttle,
                            brake=brake, gear=1)
    new_memory = AvMemory(state=state, clear_time=clear_time)
    return actuation, new_memory, set_ehmi(state)

"""Fixed-timestep motion models and hardware-cue laws.

All step functions are pure: given the same (state, input, dt) they
return bitwise-identical results, which the deterministic replay relies
on.  Integration is explicit Euler at the server tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from . import kernels
from .world import (
    AgentKind,
    AgentState,
    AssistLevel,
    CyclistInput,
    DriverInput,
    KinematicState,
    MAX_SPEED,
    PedestrianInput,
    Pose2D,
)

GRAVITY = 9.81

# Average stride length used to derive the pedestrian step-rate aux channel.
STRIDE_LENGTH_M = 0.7


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.7        # m
    steer_ratio: float = 15.0     # wheel rad per road-wheel rad
    max_road_wheel: float = 0.6   # rad
    a_max: float = 3.0            # m/s^2 full throttle
    b_max: float = 8.0            # m/s^2 full brake
    drag_coeff: float = 0.05      # 1/s, linear speed drag

    def __post_init__(self):
        for name in ("wheelbase", "steer_ratio", "max_road_wheel",
                     "a_max", "b_max", "drag_coeff"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


ASSIST_GAIN = {
    AssistLevel.OFF: 0.0,
    AssistLevel.ECO: 0.5,
    AssistLevel.TOUR: 1.0,
    AssistLevel.TURBO: 2.0,
}


@dataclass(frozen=True)
class CyclistParams:
    mass: float = 85.0            # kg, rider + bike
    crr: float = 0.005            # rolling resistance coefficient
    cda: float = 0.5              # m^2 drag area
    rho: float = 1.225            # kg/m^3 air density
    eta: float = 0.97             # drivetrain efficiency
    g: float = GRAVITY
    assist_cutoff_speed: float = 6.944   # m/s (25 km/h)
    assist_taper_start: float = 5.556    # m/s (20 km/h)
    wheelbase: float = 1.1        # m
    max_steer: float = 0.6        # rad
    f_brake_max: float = 400.0    # N

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("eta must be in (0, 1]")
        if self.assist_taper_start >= self.assist_cutoff_speed:
            raise ValueError("taper must start below the cutoff speed")


@dataclass(frozen=True)
class PedestrianParams:
    tau: float = 0.3              # s, speed response time constant
    max_turn_rate: float = 4.0    # rad/s heading slew


@dataclass(frozen=True)
class CueCommand:
    """Actuator set-points for the fan, bike tilt and motion platform."""
    fan_intensity: float  # [0, 1]
    bike_tilt: float      # rad
    platform_pitch: float  # rad
    platform_roll: float   # rad


# Fan saturates at ~30 mph of virtual airspeed.
FAN_FULL_SPEED = 13.4
TILT_GRADE_MIN = -0.10
TILT_GRADE_MAX = 0.20
PLATFORM_GAIN = 0.05
PLATFORM_LIMIT = 0.12


def assist_factor(v: float, level: AssistLevel, params: CyclistParams) -> float:
    """Motor assist multiplier: full below the taper, zero at the cutoff.

    Linear in between, so the factor is continuous in speed.
    """
    gain = ASSIST_GAIN[level]
    if gain == 0.0 or v >= params.assist_cutoff_speed:
        return 0.0
    if v <= params.assist_taper_start:
        return gain
    span = params.assist_cutoff_speed - params.assist_taper_start
    return gain * (params.assist_cutoff_speed - v) / span


def _check_dt(dt: float):
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt {dt} outside (0, 0.1]")


def step_vehicle(state: AgentState, inp: DriverInput, params: VehicleParams,
                 grade: float, dt: float) -> AgentState:
    """Kinematic bicycle update for drivers and (takeover) AVs."""
    _check_dt(dt)
    if inp.gear > 0:
        gear_sign = 1.0
    elif inp.gear < 0:
        gear_sign = -1.0
    else:
        gear_sign = 0.0
    x, y, h, v, a, yr = kernels.step_vehicle(
        state.pose.x, state.pose.y, state.pose.heading, state.kin.speed,
        inp.steer_wheel, inp.throttle, inp.brake, gear_sign,
        params.wheelbase, params.steer_ratio, params.max_road_wheel,
        params.a_max, params.b_max, params.drag_coeff,
        MAX_SPEED[state.kind], grade, dt)
    return replace(state,
                   pose=Pose2D(x, y, h),
                   kin=KinematicState(v, a, yr, 0.0))


def step_cyclist(state: AgentState, inp: CyclistInput, params: CyclistParams,
                 grade: float, dt: float) -> AgentState:
    """Power-balance update for the cyclist, including e-bike assist."""
    _check_dt(dt)
    factor = assist_factor(state.kin.speed, inp.assist_level, params)
    x, y, h, v, a, yr = kernels.step_cyclist(
        state.pose.x, state.pose.y, state.pose.heading, state.kin.speed,
        inp.power, inp.steer, inp.brake, factor,
        params.mass, params.crr, params.cda, params.rho, params.eta,
        params.g, params.wheelbase, params.max_steer, params.f_brake_max,
        MAX_SPEED[state.kind], grade, dt)
    return replace(state,
                   pose=Pose2D(x, y, h),
                   kin=KinematicState(v, a, yr, inp.cadence))


def step_pedestrian(state: AgentState, inp: PedestrianInput,
                    params: PedestrianParams, dt: float) -> AgentState:
    """First-order walking model for pedestrians and transit users.

    Sitting down (and standing back up) is handled by the server, which
    knows whether the agent is inside a transit vehicle; a seated agent
    is never stepped through here.
    """
    _check_dt(dt)
    x, y, h, v, a, yr = kernels.step_pedestrian(
        state.pose.x, state.pose.y, state.pose.heading, state.kin.speed,
        inp.walk_speed, inp.walk_heading,
        params.tau, params.max_turn_rate, MAX_SPEED[AgentKind.PEDESTRIAN], dt)
    step_rate = v / STRIDE_LENGTH_M
    return replace(state,
                   pose=Pose2D(x, y, h),
                   kin=KinematicState(v, a, yr, step_rate))


def compute_cues(state: AgentState, grade: float) -> CueCommand:
    """Actuator cues: headwind fan, bike tilt, platform tilt coordination."""
    v = state.kin.speed
    fan = v / FAN_FULL_SPEED
    fan = min(max(fan, 0.0), 1.0)

    tilt = math.atan(min(max(grade, TILT_GRADE_MIN), TILT_GRADE_MAX))

    a_long = state.kin.accel
    a_lat = state.kin.speed * state.kin.yaw_rate
    pitch = min(max(-PLATFORM_GAIN * a_long, -PLATFORM_LIMIT), PLATFORM_LIMIT)
    roll = min(max(PLATFORM_GAIN * a_lat, -PLATFORM_LIMIT), PLATFORM_LIMIT)
    return CueCommand(fan, tilt, pitch, roll)

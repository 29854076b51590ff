"""Behavioral metrics: reaction times, gap acceptance, per-mode summaries.

All functions are pure over reconstructed trajectories, the event log,
and the recorded input stimuli; thresholds are module constants exposed
for configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..events import EventCode, EventLogRecord
from ..world import ApproachPath, distance_to_conflict, project_to_path
from .trajectory import TrajectorySample

BRAKE_ONSET = 0.05
WALK_ONSET_SPEED = 0.3      # m/s sustained to count as crossing initiation
WALK_ONSET_HOLD_S = 0.2
HARD_ACCEL = 1.0            # m/s^2 cyclist accel-event threshold
YIELD_SPEED_DROP = 0.30     # fraction of approach speed
YIELD_ZONE_M = 20.0
STEER_REVERSAL_RAD = math.radians(2.0)


@dataclass
class ReactionTimes:
    brake_rt_s: float | None = None
    takeover_tti_s: float | None = None
    crossing_initiation_s: float | None = None
    crossing_aborted: bool = False
    gap_accepted_s: float | None = None
    missing: dict[str, str] = field(default_factory=dict)


def _first_event(events: list[EventLogRecord], code: int,
                 subject: int | None = None,
                 after_us: int = -1) -> EventLogRecord | None:
    for e in events:
        if e.code != code:
            continue
        if subject is not None and e.subject != subject:
            continue
        if e.sim_time_us > after_us:
            return e
    return None


def reaction_times(events: list[EventLogRecord],
                   trajectories: dict[int, list[TrajectorySample]],
                   input_stimuli: list[dict], tick_rate: int,
                   pedestrian_id: int | None = None,
                   vehicle_id: int | None = None,
                   vehicle_path: ApproachPath | None = None) -> ReactionTimes:
    """Latency metrics tied to logged cue events.

    brake_rt: HAZARD event to the first brake input over threshold.
    takeover_tti: TAKEOVER_REQUEST to TAKEOVER_ENGAGE.
    crossing_initiation: CROSSING_CUE to sustained pedestrian motion;
    gap_accepted is the conflicting vehicle's TTA at that moment.
    """
    out = ReactionTimes()

    hazard = _first_event(events, EventCode.HAZARD)
    if hazard is None:
        out.missing["brake_rt"] = "no hazard event"
    else:
        t_brake = None
        for stim in input_stimuli:
            if stim.get("type") != "input":
                continue
            control = stim.get("control", {})
            t_us = stim["tick"] * 1_000_000 // tick_rate
            if t_us < hazard.sim_time_us:
                continue
            if control.get("kind") in ("driver",) \
                    and control.get("brake", 0.0) > BRAKE_ONSET:
                t_brake = t_us
                break
        if t_brake is None:
            out.missing["brake_rt"] = "no brake input after hazard"
        else:
            out.brake_rt_s = (t_brake - hazard.sim_time_us) / 1e6

    request = _first_event(events, EventCode.TAKEOVER_REQUEST)
    if request is None:
        out.missing["takeover_tti"] = "no takeover request"
    else:
        engage = _first_event(events, EventCode.TAKEOVER_ENGAGE,
                              subject=request.subject,
                              after_us=request.sim_time_us - 1)
        if engage is None:
            out.missing["takeover_tti"] = "request never engaged"
        else:
            out.takeover_tti_s = (engage.sim_time_us - request.sim_time_us) / 1e6

    cue = _first_event(events, EventCode.CROSSING_CUE)
    if cue is None:
        out.missing["crossing_initiation"] = "no crossing cue event"
    elif pedestrian_id is None or pedestrian_id not in trajectories:
        out.missing["crossing_initiation"] = "no pedestrian trajectory"
    else:
        samples = trajectories[pedestrian_id]
        hold_ticks = max(1, round(WALK_ONSET_HOLD_S * tick_rate))
        start_idx = None
        run = 0
        for i, s in enumerate(samples):
            if s.sim_time_us < cue.sim_time_us:
                continue
            if s.state.kin.speed >= WALK_ONSET_SPEED:
                run += 1
                if run >= hold_ticks:
                    start_idx = i - run + 1
                    break
            else:
                run = 0
        if start_idx is None:
            out.missing["crossing_initiation"] = "pedestrian never moved"
            # motion that started then reversed counts as an abort
            moved = any(s.state.kin.speed >= WALK_ONSET_SPEED
                        for s in samples if s.sim_time_us >= cue.sim_time_us)
            out.crossing_aborted = moved
        else:
            t_init = samples[start_idx].sim_time_us
            out.crossing_initiation_s = (t_init - cue.sim_time_us) / 1e6
            if vehicle_id is not None and vehicle_path is not None \
                    and vehicle_id in trajectories:
                veh = _sample_at(trajectories[vehicle_id], t_init)
                if veh is not None and veh.state.kin.speed > 1e-6:
                    dist, passed = distance_to_conflict(veh.state, vehicle_path)
                    if not passed:
                        out.gap_accepted_s = dist / veh.state.kin.speed
    return out


def _sample_at(samples: list[TrajectorySample],
               t_us: int) -> TrajectorySample | None:
    for s in samples:
        if s.sim_time_us >= t_us:
            return s
    return None


def headway_series(samples_f: list[TrajectorySample],
                   samples_l: list[TrajectorySample],
                   path: ApproachPath) -> list[tuple[float, float]]:
    """Time-headway series (t, gap/v_follower) for a shared-path pair."""
    by_tick = {s.tick: s for s in samples_l}
    out = []
    for sf in samples_f:
        sl = by_tick.get(sf.tick)
        if sl is None or sf.state.kin.speed <= 1e-9:
            continue
        s_f, _ = project_to_path(sf.state.pose, path.line)
        s_l, _ = project_to_path(sl.state.pose, path.line)
        gap = s_l - s_f
        if gap > 0:
            out.append((sf.sim_time_s, gap / sf.state.kin.speed))
    return out


# --- per-mode summaries -------------------------------------------------------


def _mean_std(values: list[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    mean = math.fsum(values) / len(values)
    var = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def _min_distance_to_others(samples: list[TrajectorySample],
                            others: dict[int, list[TrajectorySample]],
                            own_id: int) -> dict[int, float]:
    by_tick = {aid: {s.tick: s for s in traj}
               for aid, traj in others.items() if aid != own_id}
    out: dict[int, float] = {}
    for s in samples:
        for aid, ticks in by_tick.items():
            o = ticks.get(s.tick)
            if o is None:
                continue
            d = math.dist((s.state.pose.x, s.state.pose.y),
                          (o.state.pose.x, o.state.pose.y))
            if aid not in out or d < out[aid]:
                out[aid] = d
    return out


@dataclass
class CyclistStats:
    cadence_mean: float
    cadence_std: float
    speed_std: float
    hard_accel_events: int
    min_distance: dict[int, float]
    yielding_events: int


def cyclist_stats(samples: list[TrajectorySample],
                  all_trajectories: dict[int, list[TrajectorySample]],
                  path: ApproachPath | None = None,
                  vru_ids: set[int] | None = None) -> CyclistStats:
    """Cadence/speed variability, hard accelerations, proximity, yielding.

    A yielding event is a speed drop of at least 30% from the rolling
    approach speed within 20 m of the conflict point while another
    vulnerable road user is present (not yet past the conflict).
    """
    cadences = [s.state.kin.aux for s in samples]
    speeds = [s.state.kin.speed for s in samples]
    c_mean, c_std = _mean_std(cadences)
    _, v_std = _mean_std(speeds)

    hard = 0
    over = False
    for s in samples:
        beyond = abs(s.state.kin.accel) > HARD_ACCEL
        if beyond and not over:
            hard += 1
        over = beyond

    own_id = samples[0].agent_id if samples else -1
    min_d = _min_distance_to_others(samples, all_trajectories, own_id)

    yielding = 0
    if path is not None and samples:
        presence = {aid: {t.tick for t in all_trajectories.get(aid, [])}
                    for aid in (vru_ids or set()) if aid != own_id}
        approach_speed = 0.0  # fastest speed seen before the 20 m zone
        in_drop = False
        for s in samples:
            dist, passed = distance_to_conflict(s.state, path)
            if passed:
                break
            if dist > YIELD_ZONE_M:
                approach_speed = max(approach_speed, s.state.kin.speed)
                in_drop = False
                continue
            if approach_speed <= 0.1:
                continue
            vru_present = any(s.tick in ticks for ticks in presence.values())
            dropped = s.state.kin.speed <= approach_speed * (1.0 - YIELD_SPEED_DROP)
            if dropped and vru_present and not in_drop:
                yielding += 1
            in_drop = dropped
    return CyclistStats(c_mean, c_std, v_std, hard, min_d, yielding)


@dataclass
class PedestrianStats:
    speed_mean: float
    speed_std: float
    deviation_area_m2: float


def pedestrian_stats(samples: list[TrajectorySample]) -> PedestrianStats:
    """Walk-speed stats and area between the walked path and the straight
    line joining its endpoints (zero for a perfectly direct walk)."""
    speeds = [s.state.kin.speed for s in samples]
    mean, std = _mean_std(speeds)
    area = 0.0
    if len(samples) >= 2:
        x0, y0 = samples[0].state.pose.x, samples[0].state.pose.y
        x1, y1 = samples[-1].state.pose.x, samples[-1].state.pose.y
        chord = math.dist((x0, y0), (x1, y1))
        if chord > 1e-9:
            ux, uy = (x1 - x0) / chord, (y1 - y0) / chord
            prev = samples[0]
            for s in samples[1:]:
                # |cross| = lateral deviation from the chord
                dx = s.state.pose.x - x0
                dy = s.state.pose.y - y0
                lateral = abs(dx * uy - dy * ux)
                ds = math.dist((prev.state.pose.x, prev.state.pose.y),
                               (s.state.pose.x, s.state.pose.y))
                area += lateral * ds
                prev = s
    return PedestrianStats(mean, std, area)


@dataclass
class TransitStats:
    board_latency_s: float | None
    dwell_time_s: float | None
    min_proximity: dict[int, float]


def transit_stats(samples: list[TrajectorySample],
                  events: list[EventLogRecord],
                  all_trajectories: dict[int, list[TrajectorySample]]) -> TransitStats:
    """Boarding latency (door open to seated), dwell, and proximity."""
    own_id = samples[0].agent_id if samples else -1
    door_open = _first_event(events, EventCode.DOOR_OPEN)
    board = None
    if door_open is not None:
        seated = _first_event(events, EventCode.SEATED, subject=own_id,
                              after_us=door_open.sim_time_us - 1)
        if seated is not None:
            board = (seated.sim_time_us - door_open.sim_time_us) / 1e6
    dwell = None
    if door_open is not None:
        close = _first_event(events, EventCode.DOOR_CLOSE,
                             subject=door_open.subject,
                             after_us=door_open.sim_time_us)
        if close is not None:
            dwell = (close.sim_time_us - door_open.sim_time_us) / 1e6
    prox = _min_distance_to_others(samples, all_trajectories, own_id)
    return TransitStats(board, dwell, prox)


@dataclass
class DriverStats:
    steer_rate_mean: float
    steer_rate_std: float
    reversal_count: int


def driver_stats(input_stimuli: list[dict], agent_id: int,
                 tick_rate: int) -> DriverStats:
    """Steering angular-velocity stats and >=2 degree reversal count from
    the recorded input trace."""
    series: list[tuple[float, float]] = []
    for stim in input_stimuli:
        if stim.get("type") != "input" or stim.get("agent") != agent_id:
            continue
        control = stim.get("control", {})
        if control.get("kind") != "driver":
            continue
        t = stim["tick"] / tick_rate
        series.append((t, control.get("steer", 0.0)))
    rates = []
    for (t0, s0), (t1, s1) in zip(series, series[1:]):
        if t1 > t0:
            rates.append(abs(s1 - s0) / (t1 - t0))
    mean, std = _mean_std(rates)

    # running-extremum reversal detector: a move of >= 2 degrees against
    # the current steering direction counts once
    reversals = 0
    direction = 0
    extremum = series[0][1] if series else 0.0
    for _, steer in series[1:]:
        delta = steer - extremum
        if direction >= 0 and delta <= -STEER_REVERSAL_RAD:
            if direction > 0:
                reversals += 1
            direction = -1
            extremum = steer
        elif direction <= 0 and delta >= STEER_REVERSAL_RAD:
            if direction < 0:
                reversals += 1
            direction = 1
            extremum = steer
        elif (direction >= 0 and steer > extremum) \
                or (direction <= 0 and steer < extremum):
            extremum = steer
    return DriverStats(mean, std, reversals)

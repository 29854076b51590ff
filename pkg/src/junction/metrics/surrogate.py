"""Surrogate safety measures: TTC, DRAC, time headway, lane keeping.

Two TTC formulations: along-path (follower/leader share a path) and
crossing (occupancy-interval overlap over a conflict point under
constant-velocity extrapolation, with kind-specific half-lengths).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..world import (
    AgentState,
    ApproachPath,
    HALF_LENGTH,
    Lane,
    Pose2D,
    distance_to_conflict,
    project_to_path,
)

VEHICLE_WIDTH = 1.8
DRAC_CAP = 99.9
MIN_MOVING_SPEED = 1e-9


def following_ttc(gap: float, v_follower: float, v_leader: float) -> float | None:
    """Time to collision on a shared path; None when not closing."""
    closing = v_follower - v_leader
    if closing <= 0.0:
        return None
    return gap / closing


def crossing_ttc(d_a: float, v_a: float, half_a: float,
                 d_b: float, v_b: float, half_b: float) -> float | None:
    """Onset of simultaneous conflict-point occupancy; None if never.

    d_* are distances to the conflict point, half_* body half-lengths.
    """
    if v_a <= MIN_MOVING_SPEED or v_b <= MIN_MOVING_SPEED:
        return None
    enter_a = (d_a - half_a) / v_a
    exit_a = (d_a + half_a) / v_a
    enter_b = (d_b - half_b) / v_b
    exit_b = (d_b + half_b) / v_b
    onset = max(enter_a, enter_b)
    if onset > min(exit_a, exit_b):
        return None
    return max(onset, 0.0)


def drac(gap: float, v_follower: float, v_leader: float) -> tuple[float, bool]:
    """Deceleration to avoid the conflict; (value, saturated).

    Zero when not closing; capped at 99.9 m/s^2 as gap -> 0.
    """
    closing = v_follower - v_leader
    if closing <= 0.0:
        return 0.0, False
    if gap <= 0.0:
        return DRAC_CAP, True
    value = closing * closing / (2.0 * gap)
    if value >= DRAC_CAP:
        return DRAC_CAP, True
    return value, False


def time_headway(gap: float, v_follower: float) -> float | None:
    if v_follower <= MIN_MOVING_SPEED:
        return None
    return gap / v_follower


def pair_ttc_states(state_a: AgentState, path_a: ApproachPath,
                    state_b: AgentState, path_b: ApproachPath) -> float | None:
    """TTC between two live agents given their approach paths.

    Same path: along-path follower/leader form.  Different paths sharing
    a conflict point: crossing form.
    """
    if path_a.path_id == path_b.path_id:
        s_a, _ = project_to_path(state_a.pose, path_a.line)
        s_b, _ = project_to_path(state_b.pose, path_b.line)
        if s_a <= s_b:
            gap = s_b - s_a
            return following_ttc(gap, state_a.kin.speed, state_b.kin.speed)
        gap = s_a - s_b
        return following_ttc(gap, state_b.kin.speed, state_a.kin.speed)
    if path_a.conflict_point != path_b.conflict_point:
        return None
    d_a, passed_a = distance_to_conflict(state_a, path_a)
    d_b, passed_b = distance_to_conflict(state_b, path_b)
    if passed_a or passed_b:
        return None
    return crossing_ttc(d_a, state_a.kin.speed, HALF_LENGTH[state_a.kind],
                        d_b, state_b.kin.speed, HALF_LENGTH[state_b.kind])


@dataclass
class TtcPoint:
    t: float
    ttc: float  # math.inf encodes "not closing"


def ttc_series(samples_a, samples_b, path_a: ApproachPath,
               path_b: ApproachPath) -> tuple[list[TtcPoint], float | None]:
    """Pairwise TTC over aligned trajectory samples, plus the minimum."""
    by_tick_b = {s.tick: s for s in samples_b}
    series: list[TtcPoint] = []
    minimum: float | None = None
    for sa in samples_a:
        sb = by_tick_b.get(sa.tick)
        if sb is None:
            continue
        ttc = pair_ttc_states(sa.state, path_a, sb.state, path_b)
        series.append(TtcPoint(sa.sim_time_s, math.inf if ttc is None else ttc))
        if ttc is not None and (minimum is None or ttc < minimum):
            minimum = ttc
    return series, minimum


@dataclass
class LaneMetrics:
    rms_offset: float
    max_offset: float
    departures: int


def lane_metrics(poses: list[Pose2D], lane: Lane,
                 vehicle_width: float = VEHICLE_WIDTH) -> LaneMetrics:
    """Centerline tracking quality over a pose trajectory.

    A departure is a maximal interval where the vehicle edge leaves the
    lane: |offset| > lane_width/2 - vehicle_width/2.
    """
    if not poses:
        return LaneMetrics(0.0, 0.0, 0)
    threshold = lane.width / 2.0 - vehicle_width / 2.0
    sum_sq = 0.0
    max_off = 0.0
    departures = 0
    outside = False
    for pose in poses:
        _, off = project_to_path(pose, lane.centerline)
        sum_sq += off * off
        if abs(off) > max_off:
            max_off = abs(off)
        beyond = abs(off) > threshold
        if beyond and not outside:
            departures += 1
        outside = beyond
    return LaneMetrics(rms_offset=math.sqrt(sum_sq / len(poses)),
                       max_offset=max_off, departures=departures)

import math
import random

import pytest

from junction.metrics.behavior import (
    cyclist_stats,
    driver_stats,
    headway_series,
    pedestrian_stats,
    reaction_times,
)
from junction.metrics.instruments import (
    InstrumentResponse,
    NbackStimulus,
    grade_nback,
    score_instruments,
)
from junction.metrics.surrogate import (
    DRAC_CAP,
    crossing_ttc,
    drac,
    following_ttc,
    lane_metrics,
)
from junction.metrics.trajectory import TrajectorySample
from junction.events import EventCode, EventLogRecord
from junction.world import (
    AgentKind,
    AgentState,
    ApproachPath,
    KinematicState,
    Lane,
    Polyline,
    Pose2D,
)


def extrapolation_ttc_oracle(gap, v_f, v_l, dt=0.001, horizon=120.0):
    """Constant-velocity 1 ms stepping with linear crossing interpolation."""
    g = gap
    t = 0.0
    while t < horizon:
        g_next = g - (v_f - v_l) * dt
        if g_next <= 0.0:
            if g == g_next:
                return None
            return t + dt * g / (g - g_next)
        g = g_next
        t += dt
    return None


def crossing_oracle(d_a, v_a, half_a, d_b, v_b, half_b, dt=0.001,
                    horizon=200.0):
    """Scan for the first instant both bodies occupy the conflict point."""
    t = 0.0
    while t < horizon:
        pos_a = d_a - v_a * t
        pos_b = d_b - v_b * t
        if abs(pos_a) <= half_a and abs(pos_b) <= half_b:
            # refine the entry instant analytically within this step
            enter_a = (d_a - half_a) / v_a if v_a > 0 else -math.inf
            enter_b = (d_b - half_b) / v_b if v_b > 0 else -math.inf
            return max(min(enter_a, t), min(enter_b, t), 0.0) \
                if False else max(enter_a, enter_b, 0.0)
        t += dt
    return None


class TestTtc:
    def test_along_path_formula(self):
        # cross-checked against the 1 ms extrapolation oracle
        assert following_ttc(40.0, 20.0, 10.0) == pytest.approx(4.0)
        oracle = extrapolation_ttc_oracle(40.0, 20.0, 10.0)
        assert oracle == pytest.approx(4.0, abs=1e-6)

    def test_equal_speeds_never_collide(self):
        assert following_ttc(40.0, 10.0, 10.0) is None
        assert extrapolation_ttc_oracle(40.0, 10.0, 10.0) is None

    def test_oracle_agreement_randomized(self):
        rng = random.Random(77)
        for _ in range(1000):
            gap = rng.uniform(1.0, 200.0)
            v_f = rng.uniform(0.0, 30.0)
            v_l = rng.uniform(0.0, 30.0)
            formula = following_ttc(gap, v_f, v_l)
            oracle = extrapolation_ttc_oracle(gap, v_f, v_l)
            if formula is None or formula > 119.0:
                assert oracle is None or oracle > 119.0
            else:
                assert oracle == pytest.approx(formula, abs=1e-6)

    def test_crossing_fig6_placement(self):
        # car 100 m at 30 km/h vs pedestrian 18 m at 1.5 m/s: both reach
        # the conflict at 12 s; onset is the later occupancy entry
        v_car = 30 / 3.6
        ttc = crossing_ttc(100.0, v_car, 2.25, 18.0, 1.5, 0.3)
        enter_car = (100.0 - 2.25) / v_car
        enter_ped = (18.0 - 0.3) / 1.5
        assert ttc == pytest.approx(max(enter_car, enter_ped), abs=1e-12)
        oracle = crossing_oracle(100.0, v_car, 2.25, 18.0, 1.5, 0.3)
        assert ttc == pytest.approx(oracle, abs=1e-6)

    def test_crossing_disjoint_windows_infinite(self):
        # fast car clears the conflict before the pedestrian arrives
        assert crossing_ttc(10.0, 20.0, 2.25, 50.0, 1.0, 0.3) is None

    def test_stationary_agent_never_collides(self):
        assert crossing_ttc(10.0, 0.0, 2.25, 10.0, 1.0, 0.3) is None


class TestDrac:
    def test_formula(self):
        value, saturated = drac(40.0, 20.0, 10.0)
        assert value == pytest.approx(1.25)
        assert not saturated

    def test_not_closing_zero(self):
        assert drac(40.0, 10.0, 10.0) == (0.0, False)
        assert drac(40.0, 5.0, 10.0) == (0.0, False)

    def test_saturation_at_vanishing_gap(self):
        value, saturated = drac(1e-9, 20.0, 0.0)
        assert value == DRAC_CAP
        assert saturated

    def test_algebraic_identity_when_closing(self):
        rng = random.Random(9)
        for _ in range(500):
            gap = rng.uniform(0.5, 300.0)
            v_f = rng.uniform(0.0, 40.0)
            v_l = rng.uniform(0.0, 40.0)
            value, saturated = drac(gap, v_f, v_l)
            if v_f > v_l and not saturated:
                assert value * 2.0 * gap == pytest.approx(
                    (v_f - v_l) ** 2, rel=1e-12)

    def test_matches_extrapolation_oracle(self):
        # required braking reproduces the stopping-distance relation
        rng = random.Random(13)
        for _ in range(1000):
            gap = rng.uniform(1.0, 150.0)
            v_f = rng.uniform(0.5, 35.0)
            v_l = rng.uniform(0.0, v_f)
            value, saturated = drac(gap, v_f, v_l)
            if saturated or value == 0.0:
                continue
            closing = v_f - v_l
            stop_dist = closing * closing / (2 * value)
            assert stop_dist == pytest.approx(gap, abs=1e-6)


class TestLaneMetrics:
    LANE = Lane("l", Polyline([(0.0, 0.0), (200.0, 0.0)]), width=3.5)

    def poses(self, offsets):
        return [Pose2D(1.0 + i * 0.5, off, 0.0)
                for i, off in enumerate(offsets)]

    def test_perfect_tracking(self):
        out = lane_metrics(self.poses([0.0] * 100), self.LANE)
        assert out.rms_offset == pytest.approx(0.0, abs=1e-12)
        assert out.departures == 0

    def test_constant_offset(self):
        out = lane_metrics(self.poses([0.5] * 100), self.LANE)
        assert out.rms_offset == pytest.approx(0.5)
        assert out.max_offset == pytest.approx(0.5)

    def test_sinusoidal_rms(self):
        amp = 0.4
        n = 4000
        offsets = [amp * math.sin(2 * math.pi * 8 * i / n) for i in range(n)]
        poses = [Pose2D(1.0 + i * 198.0 / n, off, 0.0)
                 for i, off in enumerate(offsets)]
        out = lane_metrics(poses, self.LANE)
        assert out.rms_offset == pytest.approx(amp / math.sqrt(2), abs=1e-3)

    def test_departure_counting(self):
        # lane 3.5 m, vehicle 1.8 m: departure beyond 0.85 m offset
        offsets = [0.0] * 10 + [1.0] * 5 + [0.0] * 10 + [0.9] * 3 + [0.0] * 5
        out = lane_metrics(self.poses(offsets), self.LANE)
        assert out.departures == 2


def traj(agent_id, kind, samples, rate=100):
    out = []
    for tick, (x, y, v, aux, accel) in enumerate(samples):
        out.append(TrajectorySample(
            tick=tick, sim_time_us=tick * 1_000_000 // rate,
            agent_id=agent_id,
            state=AgentState(agent_id, kind, Pose2D(x, y, 0),
                             KinematicState(speed=v, accel=accel, aux=aux))))
    return out


class TestModeStats:
    def test_constant_cadence(self):
        samples = [(i * 0.05, 0.0, 5.0, 80.0, 0.0) for i in range(100)]
        t = traj(1, AgentKind.CYCLIST, samples)
        out = cyclist_stats(t, {1: t})
        assert out.cadence_mean == pytest.approx(80.0)
        assert out.cadence_std == 0.0
        assert out.speed_std == 0.0

    def test_hard_accel_events_counted_once_per_excursion(self):
        samples = [(i * 0.05, 0.0, 5.0, 80.0,
                    2.0 if 20 <= i < 30 or 60 <= i < 64 else 0.0)
                   for i in range(100)]
        t = traj(1, AgentKind.CYCLIST, samples)
        out = cyclist_stats(t, {1: t})
        assert out.hard_accel_events == 2

    def test_scripted_yield_detected(self):
        # approach at 10 m/s, drop to 6 m/s inside 20 m of the conflict
        # with a pedestrian present: exactly one yielding event
        path = ApproachPath("b", Polyline([(-100.0, 0.0), (0.0, 0.0)]), "cp")
        samples = []
        x = -60.0
        for i in range(800):
            v = 10.0 if x < -15.0 else 6.0
            samples.append((x, 0.0, v, 80.0, 0.0))
            x += v * 0.01
        cyclist = traj(1, AgentKind.CYCLIST, samples)
        ped = traj(2, AgentKind.PEDESTRIAN,
                   [(0.0, 5.0, 1.0, 0.0, 0.0)] * 800)
        out = cyclist_stats(cyclist, {1: cyclist, 2: ped}, path, {2})
        assert out.yielding_events == 1

    def test_pedestrian_straight_walk_zero_deviation(self):
        samples = [(0.0, i * 0.015, 1.5, 2.1, 0.0) for i in range(200)]
        out = pedestrian_stats(traj(1, AgentKind.PEDESTRIAN, samples))
        assert out.deviation_area_m2 == pytest.approx(0.0, abs=1e-9)
        assert out.speed_mean == pytest.approx(1.5)

    def test_pedestrian_detour_positive_area(self):
        samples = [(math.sin(i / 40 * math.pi) * 2.0, i * 0.02, 1.5, 2.1, 0.0)
                   for i in range(80)]
        out = pedestrian_stats(traj(1, AgentKind.PEDESTRIAN, samples))
        assert out.deviation_area_m2 > 0.5

    def test_driver_steering_reversals(self):
        stimuli = []
        angles = [0.0, 0.10, 0.20, 0.10, 0.0, -0.10, 0.0, 0.005, 0.0]
        for i, steer in enumerate(angles):
            stimuli.append({"type": "input", "agent": 1, "tick": i * 10,
                            "control": {"kind": "driver", "steer": steer,
                                        "throttle": 0.2, "brake": 0.0,
                                        "gear": 1}})
        out = driver_stats(stimuli, 1, 100)
        # direction changes at 0.20 (down) and -0.10 (up); the trailing
        # 5 mrad wiggle is under the 2-degree threshold
        assert out.reversal_count == 2
        assert out.steer_rate_mean > 0


class TestHeadway:
    def test_constant_gap_headway(self):
        # follower at 10 m/s trailing 40 m behind: headway = 4 s
        path = ApproachPath("p", Polyline([(-300.0, 0.0), (0.0, 0.0)]), "cp")
        follower, leader = [], []
        for tick in range(100):
            x = -200.0 + tick * 0.1
            follower.append((x, 0.0, 10.0, 0.0, 0.0))
            leader.append((x + 40.0, 0.0, 10.0, 0.0, 0.0))
        series = headway_series(traj(1, AgentKind.DRIVER, follower),
                                traj(2, AgentKind.DRIVER, leader), path)
        assert len(series) == 100
        for _, h in series:
            assert h == pytest.approx(4.0, abs=1e-9)

    def test_leader_behind_excluded(self):
        path = ApproachPath("p", Polyline([(-300.0, 0.0), (0.0, 0.0)]), "cp")
        ahead = traj(1, AgentKind.DRIVER, [(-100.0, 0.0, 10.0, 0.0, 0.0)])
        behind = traj(2, AgentKind.DRIVER, [(-150.0, 0.0, 10.0, 0.0, 0.0)])
        assert headway_series(ahead, behind, path) == []


class TestReactionTimes:
    def make_events(self):
        return [
            EventLogRecord(5_000_000, 500, EventCode.HAZARD),
            EventLogRecord(8_200_000, 820, EventCode.TAKEOVER_REQUEST,
                           subject=1),
            EventLogRecord(10_000_000, 1000, EventCode.TAKEOVER_ENGAGE,
                           subject=1, value=1.8),
            EventLogRecord(6_000_000, 600, EventCode.CROSSING_CUE),
        ]

    def test_takeover_tti(self):
        out = reaction_times(self.make_events(), {}, [], 100)
        assert out.takeover_tti_s == pytest.approx(1.8)

    def test_brake_rt(self):
        stimuli = [
            {"type": "input", "agent": 1, "tick": 400,
             "control": {"kind": "driver", "brake": 0.9, "steer": 0.0,
                         "throttle": 0.0, "gear": 1}},  # before hazard
            {"type": "input", "agent": 1, "tick": 560,
             "control": {"kind": "driver", "brake": 0.02, "steer": 0.0,
                         "throttle": 0.0, "gear": 1}},  # sub-threshold
            {"type": "input", "agent": 1, "tick": 580,
             "control": {"kind": "driver", "brake": 0.4, "steer": 0.0,
                         "throttle": 0.0, "gear": 1}},
        ]
        out = reaction_times(self.make_events(), {}, stimuli, 100)
        assert out.brake_rt_s == pytest.approx(0.8)

    def test_crossing_initiation_and_gap(self):
        # pedestrian steps off 1.2 s after the cue; vehicle then 50 m
        # out at 30 km/h gives a 6 s accepted gap
        ped, veh = [], []
        v_veh = 8.333333333333334
        for tick in range(1500):
            t = tick / 100.0
            speed = 0.0 if t < 7.2 else 1.5
            ped.append((0.0, 10.0, speed, 0.0, 0.0))
            x = -50.0 - (7.2 - t) * v_veh
            veh.append((x, 0.0, v_veh, 0.0, 0.0))
        trajectories = {
            2: traj(2, AgentKind.PEDESTRIAN, ped),
            3: traj(3, AgentKind.DRIVER, veh),
        }
        path = ApproachPath("v", Polyline([(-200.0, 0.0), (0.0, 0.0)]), "cp")
        out = reaction_times(self.make_events(), trajectories, [], 100,
                             pedestrian_id=2, vehicle_id=3,
                             vehicle_path=path)
        assert out.crossing_initiation_s == pytest.approx(1.2, abs=0.01)
        assert out.gap_accepted_s == pytest.approx(6.0, abs=0.02)

    def test_never_moving_pedestrian_absent_with_reason(self):
        ped = traj(2, AgentKind.PEDESTRIAN,
                   [(0.0, 10.0, 0.0, 0.0, 0.0)] * 800)
        out = reaction_times(self.make_events(), {2: ped}, [], 100,
                             pedestrian_id=2)
        assert out.crossing_initiation_s is None
        assert "crossing_initiation" in out.missing
        assert not out.crossing_aborted

    def test_missing_hazard_reported(self):
        out = reaction_times([], {}, [], 100)
        assert out.brake_rt_s is None
        assert "brake_rt" in out.missing


class TestInstruments:
    def tlx(self, values):
        return [InstrumentResponse("TLX", i, v, float(i))
                for i, v in enumerate(values)]

    def test_tlx_all_50(self):
        scores = score_instruments(self.tlx([50.0] * 6))
        assert scores.tlx_raw == 50.0

    def test_tlx_mean(self):
        scores = score_instruments(self.tlx([0, 20, 40, 60, 80, 100]))
        assert scores.tlx_raw == pytest.approx(50.0)

    def test_incomplete_tlx_flagged(self):
        scores = score_instruments(self.tlx([50.0] * 5))
        assert scores.tlx_raw is None
        assert "TLX" in scores.incomplete

    def test_permutation_invariant(self):
        responses = self.tlx([10, 20, 30, 40, 50, 60])
        shuffled = list(reversed(responses))
        assert score_instruments(responses) == score_instruments(shuffled)

    def test_panas_sums(self):
        positive = {0, 2, 4, 8, 9, 11, 13, 15, 16, 18}
        responses = [InstrumentResponse("PANAS", i,
                                        5.0 if i in positive else 2.0, 0.0)
                     for i in range(20)]
        scores = score_instruments(responses)
        assert scores.panas_pa == 50.0
        assert scores.panas_na == 20.0

    def test_time_perception_ratio(self):
        scores = score_instruments(
            [InstrumentResponse("TIMEPERC", 0, 90.0, 0.0)],
            actual_duration_s=60.0)
        assert scores.time_perception_ratio == pytest.approx(1.5)

    def test_va_pair(self):
        scores = score_instruments([
            InstrumentResponse("VA", 0, 0.5, 0.0),
            InstrumentResponse("VA", 1, -0.25, 0.0)])
        assert scores.valence == 0.5
        assert scores.arousal == -0.25


def brute_force_nback(stimuli, responses, n, window=2.5):
    """Independent grader: full re-scan per response, then per stimulus."""
    stims = sorted(stimuli, key=lambda s: s.t)
    assigned = {}
    used = set()
    for r in sorted(responses):
        best = None
        for i, s in enumerate(stims):
            if s.t <= r <= s.t + window:
                best = i
        if best is None or best in used:
            continue
        used.add(best)
        assigned[best] = r - stims[best].t
    hits = misses = fa = cr = 0
    rts = []
    for i, s in enumerate(stims):
        target = i >= n and s.symbol == stims[i - n].symbol
        if target and i in assigned:
            hits += 1
            rts.append(assigned[i])
        elif target:
            misses += 1
        elif i in assigned:
            fa += 1
        else:
            cr += 1
    total = len(stims)
    return {
        "hits": hits, "misses": misses, "false_alarms": fa,
        "correct_rejections": cr, "omissions": misses,
        "accuracy": (hits + cr) / total if total else 0.0,
        "mean_rt": sum(rts) / len(rts) if rts else None,
    }


class TestNback:
    def test_aba_with_n2_is_target(self):
        stims = [NbackStimulus(0.0, 65), NbackStimulus(2.0, 66),
                 NbackStimulus(4.0, 65)]
        out = grade_nback(stims, [4.5], 2)
        assert out.hits == 1
        assert out.misses == 0
        assert out.false_alarms == 0

    def test_all_targets_hit(self):
        # 20 stimuli, 6 targets, responses 0.8 s after each target;
        # built sequentially so each position is decided exactly once
        rng = random.Random(5)
        symbols = [65, 66, 67, 68]
        target_positions = [3, 6, 9, 12, 15, 18]
        seq = []
        for i in range(20):
            if i in target_positions:
                seq.append(seq[i - 2])
            elif i >= 2:
                seq.append(rng.choice([s for s in symbols
                                       if s != seq[i - 2]]))
            else:
                seq.append(rng.choice(symbols))
        stims = [NbackStimulus(2.0 * i, s) for i, s in enumerate(seq)]
        responses = [2.0 * p + 0.8 for p in target_positions]
        out = grade_nback(stims, responses, 2)
        assert out.hits == 6
        assert out.omissions == 0
        assert out.false_alarms == 0
        assert out.accuracy == 1.0
        assert out.mean_rt == pytest.approx(0.8)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_matches_brute_force(self, n):
        rng = random.Random(100 + n)
        for _ in range(333):
            length = rng.randrange(n + 1, 30)
            stims = [NbackStimulus(2.0 * i, rng.randrange(65, 70))
                     for i in range(length)]
            responses = sorted(
                rng.uniform(0, 2.0 * length + 2)
                for _ in range(rng.randrange(0, length)))
            mine = grade_nback(stims, responses, n)
            oracle = brute_force_nback(stims, responses, n)
            assert mine.hits == oracle["hits"]
            assert mine.misses == oracle["misses"]
            assert mine.false_alarms == oracle["false_alarms"]
            assert mine.correct_rejections == oracle["correct_rejections"]
            assert mine.accuracy == pytest.approx(oracle["accuracy"])
            if oracle["mean_rt"] is None:
                assert mine.mean_rt is None
            else:
                assert mine.mean_rt == pytest.approx(oracle["mean_rt"])

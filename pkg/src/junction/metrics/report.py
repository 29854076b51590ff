"""Metric extraction driver: one session log in, CSV/JSON files out.

Column units: seconds for times, meters for distances, m/s for speeds,
m/s^2 for decelerations, rpm for cadence.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict

from ..events import EventCode, SessionLog
from ..scenario import ScenarioSpec, load_scenario
from ..world import AgentKind
from . import behavior, instruments, surrogate
from .trajectory import reconstruct


def _agent_paths(spec: ScenarioSpec):
    out = {}
    for i, a in enumerate(spec.agents):
        path = spec.map.approach_paths.get(a.path_id)
        if path is not None:
            out[i + 1] = path
    return out


def _instrument_responses(log: SessionLog):
    by_agent: dict[int, list[instruments.InstrumentResponse]] = {}
    for e in log.events:
        if e.code != EventCode.QRESPONSE:
            continue
        idx = e.extra.get("instrument", e.object_id >> 8)
        item = e.extra.get("item", e.object_id & 0xFF)
        if idx >= len(instruments.INSTRUMENT_NAMES):
            continue
        by_agent.setdefault(e.subject, []).append(
            instruments.InstrumentResponse(
                instrument=instruments.INSTRUMENT_NAMES[idx], item=item,
                value=e.value, sim_time_s=e.sim_time_us / 1e6))
    return by_agent


def _nback_runs(log: SessionLog):
    """Group NBACK_STIM/RESP events into runs per NBACK_START."""
    runs = []
    current = None
    for e in log.events:
        if e.code == EventCode.NBACK_START:
            current = {"agent": e.subject, "n": e.extra.get("n", int(e.value)),
                       "stimuli": [], "responses": []}
            runs.append(current)
        elif e.code == EventCode.NBACK_STIM and current is not None:
            current["stimuli"].append(instruments.NbackStimulus(
                t=e.sim_time_us / 1e6, symbol=int(e.value)))
        elif e.code == EventCode.NBACK_RESP and current is not None:
            current["responses"].append(e.sim_time_us / 1e6)
    return runs


def extract_all(log: SessionLog, out_dir: str,
                svg: bool = False) -> dict:
    """Run every metric family; returns the summary dict (also written)."""
    spec = load_scenario(log.header.scenario_text)
    trajectories = reconstruct(log)
    paths = _agent_paths(spec)
    events = log.events
    stimuli = log.stimuli
    rate = log.header.tick_rate
    os.makedirs(out_dir, exist_ok=True)

    agent_kind = {i + 1: a.kind for i, a in enumerate(spec.agents)}
    agent_name = {i + 1: a.name for i, a in enumerate(spec.agents)}
    vru_ids = {aid for aid, k in agent_kind.items()
               if k in (AgentKind.CYCLIST, AgentKind.PEDESTRIAN,
                        AgentKind.TRANSIT_USER)}

    summary: dict = {"scenario_hash": log.header.scenario_hash,
                     "tick_rate": rate, "agents": {}}

    # pairwise surrogate measures
    pair_rows = []
    ids = sorted(trajectories)
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if a not in paths or b not in paths:
                continue
            series, minimum = surrogate.ttc_series(
                trajectories[a], trajectories[b], paths[a], paths[b])
            if not series:
                continue
            finite = [p for p in series if math.isfinite(p.ttc)]
            pair_rows.append({
                "agent_a": agent_name.get(a, a), "agent_b": agent_name.get(b, b),
                "min_ttc_s": "" if minimum is None else f"{minimum:.6f}",
                "ttc_samples": len(finite)})
            if svg and finite:
                _write_svg_series(
                    os.path.join(out_dir, f"ttc_{a}_{b}.svg"),
                    [(p.t, p.ttc) for p in finite],
                    f"TTC {agent_name.get(a, a)} vs {agent_name.get(b, b)} (s)")
    _write_csv(os.path.join(out_dir, "surrogate.csv"),
               ["agent_a", "agent_b", "min_ttc_s", "ttc_samples"], pair_rows)

    # time headway for follower/leader pairs sharing an approach path
    headway_rows = []
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            path_a = spec.agents[a - 1].path_id if a - 1 < len(spec.agents) else None
            path_b = spec.agents[b - 1].path_id if b - 1 < len(spec.agents) else None
            if path_a is None or path_a != path_b or a not in paths:
                continue
            series = behavior.headway_series(trajectories[a], trajectories[b],
                                             paths[a])
            series += behavior.headway_series(trajectories[b], trajectories[a],
                                              paths[a])
            if not series:
                continue
            values = [h for _, h in series]
            headway_rows.append({
                "agent_a": agent_name.get(a, a), "agent_b": agent_name.get(b, b),
                "min_headway_s": f"{min(values):.3f}",
                "mean_headway_s": f"{sum(values) / len(values):.3f}",
                "samples": len(values)})
    _write_csv(os.path.join(out_dir, "headway.csv"),
               ["agent_a", "agent_b", "min_headway_s", "mean_headway_s",
                "samples"], headway_rows)

    # lane keeping for vehicle agents that have a lane
    lane_rows = []
    for aid, traj in trajectories.items():
        if agent_kind.get(aid) not in (AgentKind.DRIVER,
                                       AgentKind.AUTOMATED_VEHICLE):
            continue
        lane = _lane_for_agent(spec, aid)
        if lane is None:
            continue
        lm = surrogate.lane_metrics([s.state.pose for s in traj], lane)
        lane_rows.append({"agent": agent_name.get(aid, aid),
                          "rms_offset_m": f"{lm.rms_offset:.4f}",
                          "max_offset_m": f"{lm.max_offset:.4f}",
                          "departures": lm.departures})
    _write_csv(os.path.join(out_dir, "lane.csv"),
               ["agent", "rms_offset_m", "max_offset_m", "departures"], lane_rows)

    # reaction-time family
    ped_id = next((aid for aid, k in agent_kind.items()
                   if k == AgentKind.PEDESTRIAN), None)
    veh_id = next((aid for aid, k in agent_kind.items()
                   if k in (AgentKind.DRIVER, AgentKind.AUTOMATED_VEHICLE)), None)
    rt = behavior.reaction_times(
        events, trajectories, stimuli, rate, pedestrian_id=ped_id,
        vehicle_id=veh_id, vehicle_path=paths.get(veh_id))
    summary["reaction_times"] = {k: v for k, v in asdict(rt).items()}

    # per-mode stats
    mode_rows = []
    for aid, traj in trajectories.items():
        kind = agent_kind.get(aid)
        name = agent_name.get(aid, str(aid))
        if kind == AgentKind.CYCLIST:
            st = behavior.cyclist_stats(traj, trajectories, paths.get(aid),
                                        vru_ids)
            mode_rows.append({"agent": name, "kind": "cyclist",
                              "stats": json.dumps(asdict(st))})
            summary["agents"][name] = asdict(st)
        elif kind == AgentKind.PEDESTRIAN:
            st = behavior.pedestrian_stats(traj)
            mode_rows.append({"agent": name, "kind": "pedestrian",
                              "stats": json.dumps(asdict(st))})
            summary["agents"][name] = asdict(st)
        elif kind == AgentKind.TRANSIT_USER:
            st = behavior.transit_stats(traj, events, trajectories)
            mode_rows.append({"agent": name, "kind": "transit_user",
                              "stats": json.dumps(asdict(st))})
            summary["agents"][name] = asdict(st)
        elif kind in (AgentKind.DRIVER, AgentKind.AUTOMATED_VEHICLE):
            st = behavior.driver_stats(stimuli, aid, rate)
            mode_rows.append({"agent": name, "kind": "driver",
                              "stats": json.dumps(asdict(st))})
            summary["agents"][name] = asdict(st)
    _write_csv(os.path.join(out_dir, "mode_stats.csv"),
               ["agent", "kind", "stats"], mode_rows)

    # instruments
    inst_rows = []
    for aid, responses in _instrument_responses(log).items():
        scores = instruments.score_instruments(responses)
        row = {"agent": agent_name.get(aid, aid)}
        row.update({k: ("" if v is None else v)
                    for k, v in asdict(scores).items() if k != "incomplete"})
        row["incomplete"] = ";".join(scores.incomplete)
        inst_rows.append(row)
        summary.setdefault("instruments", {})[agent_name.get(aid, str(aid))] = \
            asdict(scores)
    _write_csv(os.path.join(out_dir, "instruments.csv"),
               ["agent", "tlx_raw", "panas_pa", "panas_na", "valence",
                "arousal", "stress", "time_perception_ratio", "perceived_s",
                "incomplete"], inst_rows)

    # n-back runs
    nb_rows = []
    for run in _nback_runs(log):
        graded = instruments.grade_nback(run["stimuli"], run["responses"],
                                         run["n"])
        row = {"agent": agent_name.get(run["agent"], run["agent"]),
               "n": run["n"]}
        row.update({k: ("" if v is None else v)
                    for k, v in asdict(graded).items()})
        nb_rows.append(row)
        summary.setdefault("nback", []).append(
            {"agent": agent_name.get(run["agent"], str(run["agent"])),
             "n": run["n"], **asdict(graded)})
    _write_csv(os.path.join(out_dir, "nback.csv"),
               ["agent", "n", "hits", "misses", "false_alarms",
                "correct_rejections", "omissions", "accuracy", "mean_rt",
                "stray_responses"], nb_rows)

    with open(os.path.join(out_dir, "summary.json"), "w") as fp:
        json.dump(summary, fp, indent=2, default=str)
    return summary


def _lane_for_agent(spec: ScenarioSpec, agent_id: int):
    aspec = spec.agents[agent_id - 1]
    lane = spec.map.lanes.get(aspec.path_id)
    if lane is not None:
        return lane
    # fall back to a lane whose centerline matches the approach path
    path = spec.map.approach_paths.get(aspec.path_id)
    if path is None:
        return None
    for lane in spec.map.lanes.values():
        if lane.centerline.points == path.line.points:
            return lane
    return None


def _write_csv(path: str, fields: list[str], rows: list[dict]):
    with open(path, "w", newline="") as fp:
        writer = csv.DictWriter(fp, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _write_svg_series(path: str, points: list[tuple[float, float]],
                      title: str, width: int = 640, height: int = 240):
    """Static polyline chart; display only."""
    if not points:
        return
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    xr = (x1 - x0) or 1.0
    yr = (y1 - y0) or 1.0
    margin = 30
    w, h = width - 2 * margin, height - 2 * margin

    def sx(x):
        return margin + (x - x0) / xr * w

    def sy(y):
        return height - margin - (y - y0) / yr * h

    pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in points)
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}"><rect width="100%" height="100%" fill="white"/>'
           f'<text x="{margin}" y="18" font-size="12">{title}</text>'
           f'<polyline points="{pts}" fill="none" stroke="#2060c0" '
           f'stroke-width="1.5"/>'
           f'<text x="{margin}" y="{height - 8}" font-size="10">{x0:.1f}s</text>'
           f'<text x="{width - margin - 30}" y="{height - 8}" '
           f'font-size="10">{x1:.1f}s</text></svg>')
    with open(path, "w") as fp:
        fp.write(svg)

"""Alignment driver: sensor CSV directory + session log -> aligned features.

Pairs the MARK streams' device-clock sync pulses with the simulator's
SYNC_MARK events (by mark index), fits one clock map per device clock,
extracts per-modality features, and optionally cuts event-locked epochs.
"""

from __future__ import annotations

import csv
import glob
import json
import os

import numpy as np

from .events import EventCode, SessionLog, code_for_name
from .sensing import (
    Modality,
    SensorStream,
    cut_epochs,
    detect_fixations,
    eda_decompose,
    fit_clock_map,
    gaze_heatmap,
    hr_from_bvp,
    read_stream_csv,
)


def load_stream_dir(stream_dir: str) -> list[SensorStream]:
    paths = sorted(glob.glob(os.path.join(stream_dir, "*.csv")))
    if not paths:
        raise ValueError(f"no stream CSVs in {stream_dir}")
    return [read_stream_csv(p) for p in paths]


def fit_clocks(streams: list[SensorStream], log: SessionLog) -> dict:
    """One ClockMap per device clock from paired sync marks."""
    sim_marks = {int(e.value): e.sim_time_us / 1e6
                 for e in log.events if e.code == EventCode.SYNC_MARK}
    maps = {}
    for stream in streams:
        if stream.modality != Modality.MARK:
            continue
        dev, sim = [], []
        for t_dev, idx in zip(stream.t, stream.channels[:, 0]):
            key = int(idx)
            if key in sim_marks:
                dev.append(float(t_dev))
                sim.append(sim_marks[key])
        if len(dev) < 2:
            raise ValueError(
                f"clock {stream.clock_id}: fewer than 2 matchable sync marks")
        maps[stream.clock_id] = fit_clock_map(dev, sim)
    return maps


def run_alignment(log: SessionLog, stream_dir: str, out_dir: str,
                  epoch_event: str | None = None, pre_s: float = 2.0,
                  post_s: float = 8.0, out_rate: float = 10.0) -> dict:
    streams = load_stream_dir(stream_dir)
    clock_maps = fit_clocks(streams, log)
    os.makedirs(out_dir, exist_ok=True)
    report: dict = {
        "clocks": {cid: {"a": m.a, "b": m.b, "residual_rms": m.residual_rms}
                   for cid, m in clock_maps.items()},
        "streams": {}, "warnings": []}

    for stream in streams:
        if stream.modality == Modality.MARK:
            continue
        if stream.clock_id not in clock_maps:
            report["warnings"].append(
                f"stream {stream.stream_id}: no MARK stream for clock "
                f"{stream.clock_id}")
            continue
        info: dict = {"modality": stream.modality.value,
                      "samples": stream.n_samples}
        if stream.modality == Modality.BVP:
            cardiac = hr_from_bvp(stream)
            info["flagged_empty"] = cardiac.flagged_empty
            if not cardiac.flagged_empty:
                info["mean_hr_bpm"] = float(np.mean(cardiac.hr_bpm))
                info["rmssd_ms"] = cardiac.rmssd_ms
                info["sdnn_ms"] = cardiac.sdnn_ms
                _write_rows(os.path.join(out_dir, f"{stream.stream_id}_hr.csv"),
                            ["t_dev_s", "ibi_s", "hr_bpm"],
                            zip(cardiac.peak_times[1:], cardiac.ibi_s,
                                cardiac.hr_bpm))
        elif stream.modality == Modality.EDA:
            eda = eda_decompose(stream)
            info["scr_count"] = len(eda.scr_events)
            _write_rows(os.path.join(out_dir, f"{stream.stream_id}_scr.csv"),
                        ["onset_dev_s", "peak_dev_s", "amplitude_us"],
                        ((s.onset_s, s.peak_s, s.amplitude_us)
                         for s in eda.scr_events))
        elif stream.modality == Modality.GAZE:
            fixations = detect_fixations(stream)
            info["fixation_count"] = len(fixations)
            if fixations:
                info["mean_fixation_s"] = float(
                    np.mean([f.duration_s for f in fixations]))
            _write_rows(os.path.join(out_dir,
                                     f"{stream.stream_id}_fixations.csv"),
                        ["start_dev_s", "end_dev_s", "cx", "cy"],
                        ((f.start_s, f.end_s, f.cx, f.cy) for f in fixations))
            heat = gaze_heatmap(stream)
            np.savetxt(os.path.join(out_dir, f"{stream.stream_id}_heatmap.csv"),
                       heat, delimiter=",", fmt="%.6f")
        report["streams"][stream.stream_id] = info

    if epoch_event:
        code = code_for_name(epoch_event)
        result = cut_epochs([s for s in streams
                             if s.modality != Modality.MARK],
                            clock_maps, log.events, code,
                            pre_s, post_s, out_rate)
        report["warnings"].extend(result.warnings)
        report["epochs"] = {"event": epoch_event, "count": len(result.epochs)}
        for i, epoch in enumerate(result.epochs):
            for stream_id, matrix in epoch.data.items():
                path = os.path.join(
                    out_dir, f"epoch{i}_{epoch_event}_{stream_id}.csv")
                header = ["offset_s"] + [f"ch{c}"
                                         for c in range(matrix.shape[1])]
                _write_rows(path, header,
                            (np.concatenate(([off], row))
                             for off, row in zip(epoch.offsets_s, matrix)))

    with open(os.path.join(out_dir, "alignment.json"), "w") as fp:
        json.dump(report, fp, indent=2)
    return report


def _write_rows(path: str, header: list[str], rows):
    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.9g}" if isinstance(v, float) else v
                             for v in row])

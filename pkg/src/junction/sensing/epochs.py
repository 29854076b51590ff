"""Event-locked epoching of sensor streams on the simulator clock."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..events import EventLogRecord
from .clock import ClockMap
from .streams import Modality, SensorStream

MAX_INTERP_GAP_S = 0.5  # device-clock gaps longer than this become NaN


@dataclass
class Epoch:
    code: int
    t0_sim_s: float
    offsets_s: np.ndarray                       # uniform grid, -pre..+post
    data: dict[str, np.ndarray] = field(default_factory=dict)  # stream -> (n, ch)
    baseline_corrected: set[str] = field(default_factory=set)


@dataclass
class EpochResult:
    epochs: list[Epoch]
    warnings: list[str]


def cut_epochs(streams: list[SensorStream], clock_maps: dict[str, ClockMap],
               events: list[EventLogRecord], code: int,
               pre_s: float, post_s: float, out_rate: float) -> EpochResult:
    """Cut [-pre, +post] windows around every event with the given code.

    Streams are mapped to simulator time through their clock map and
    linearly resampled onto a shared uniform grid.  fNIRS channels are
    baseline-corrected against the [-pre, 0] mean.  Grid points falling
    in device-clock gaps longer than 0.5 s are NaN; an epoch extending
    past a stream boundary is skipped with a warning.
    """
    if pre_s < 0 or post_s <= 0 or out_rate <= 0:
        raise ValueError("bad epoch window/rate")
    n = int(round((pre_s + post_s) * out_rate)) + 1
    offsets = -pre_s + np.arange(n) / out_rate
    epochs: list[Epoch] = []
    warnings: list[str] = []

    for e in events:
        if e.code != code:
            continue
        t0 = e.sim_time_us / 1e6
        epoch = Epoch(code=code, t0_sim_s=t0, offsets_s=offsets.copy())
        usable = False
        for stream in streams:
            cmap = clock_maps.get(stream.clock_id)
            if cmap is None:
                warnings.append(
                    f"stream {stream.stream_id}: no clock map for "
                    f"clock {stream.clock_id}; skipped")
                continue
            grid_dev = cmap.to_dev(t0 + offsets)
            if grid_dev[0] < stream.t[0] or grid_dev[-1] > stream.t[-1]:
                warnings.append(
                    f"event at {t0:.3f}s: window leaves stream "
                    f"{stream.stream_id}; stream skipped for this epoch")
                continue
            matrix = np.column_stack([
                np.interp(grid_dev, stream.t, stream.channels[:, c])
                for c in range(stream.channels.shape[1])])
            # mask grid points inside long acquisition gaps
            idx = np.searchsorted(stream.t, grid_dev, side="right")
            idx = np.clip(idx, 1, stream.t.size - 1)
            gap = stream.t[idx] - stream.t[idx - 1]
            matrix[gap > MAX_INTERP_GAP_S] = np.nan
            if stream.modality == Modality.FNIRS:
                base = offsets <= 0.0
                baseline = np.nanmean(matrix[base], axis=0)
                matrix = matrix - baseline
                epoch.baseline_corrected.add(stream.stream_id)
            epoch.data[stream.stream_id] = matrix
            usable = True
        if usable:
            epochs.append(epoch)
        else:
            warnings.append(f"event at {t0:.3f}s: no usable stream; "
                            f"epoch skipped")
    return EpochResult(epochs, warnings)

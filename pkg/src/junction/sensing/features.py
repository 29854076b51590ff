"""Feature extraction: cardiac (BVP), electrodermal, and gaze.

Thresholds follow conventional defaults and are exposed as keyword
arguments; everything operates on immutable stream values and is safe to
parallelize per stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .streams import Modality, SensorStream

# --- heart rate from blood volume pulse --------------------------------------

BVP_MIN_RATE_HZ = 32.0
BVP_REFRACTORY_S = 0.3
BVP_THRESHOLD_WINDOW_S = 10.0
BVP_IQR_GAIN = 0.5


@dataclass
class CardiacFeatures:
    peak_times: np.ndarray
    ibi_s: np.ndarray
    hr_bpm: np.ndarray
    rmssd_ms: float
    sdnn_ms: float
    flagged_empty: bool = False


def hr_from_bvp(stream: SensorStream,
                refractory_s: float = BVP_REFRACTORY_S) -> CardiacFeatures:
    """Beat detection and time-domain HRV from a BVP stream.

    Peaks are local maxima above a rolling median + 0.5 IQR threshold
    (10 s window) separated by at least the refractory period.  Fewer
    than two peaks yields an empty, flagged result.
    """
    if stream.modality != Modality.BVP:
        raise ValueError("hr_from_bvp expects a BVP stream")
    if stream.rate_hz < BVP_MIN_RATE_HZ:
        raise ValueError(f"BVP rate {stream.rate_hz} below "
                         f"{BVP_MIN_RATE_HZ} Hz minimum")
    t = stream.t
    v = stream.channels[:, 0]
    win = max(3, int(round(BVP_THRESHOLD_WINDOW_S * stream.rate_hz)) | 1)
    med = ndimage.percentile_filter(v, 50, size=win, mode="nearest")
    q1 = ndimage.percentile_filter(v, 25, size=win, mode="nearest")
    q3 = ndimage.percentile_filter(v, 75, size=win, mode="nearest")
    threshold = med + BVP_IQR_GAIN * (q3 - q1)

    peaks: list[int] = []
    last_t = -math.inf
    for i in range(1, len(v) - 1):
        if v[i] <= threshold[i]:
            continue
        if v[i] >= v[i - 1] and v[i] > v[i + 1]:
            if t[i] - last_t >= refractory_s:
                peaks.append(i)
                last_t = t[i]

    empty = CardiacFeatures(np.array([]), np.array([]), np.array([]),
                            0.0, 0.0, flagged_empty=True)
    if len(peaks) < 2:
        return empty
    peak_times = t[peaks]
    ibi = np.diff(peak_times)
    hr = 60.0 / ibi
    sdnn_ms = float(np.std(ibi) * 1000.0)
    if ibi.size >= 2:
        rmssd_ms = float(np.sqrt(np.mean(np.diff(ibi) ** 2)) * 1000.0)
    else:
        rmssd_ms = 0.0
    return CardiacFeatures(peak_times, ibi, hr, rmssd_ms, sdnn_ms)


# --- electrodermal activity ---------------------------------------------------

EDA_MEDIAN_WINDOW_S = 8.0
SCR_MIN_AMPLITUDE_US = 0.05
SCR_MAX_RISE_S = 5.0


@dataclass(frozen=True)
class ScrEvent:
    onset_s: float
    peak_s: float
    amplitude_us: float


@dataclass
class EdaDecomposition:
    tonic: np.ndarray
    phasic: np.ndarray
    scr_events: list[ScrEvent]


def eda_decompose(stream: SensorStream,
                  median_window_s: float = EDA_MEDIAN_WINDOW_S,
                  scr_threshold_us: float = SCR_MIN_AMPLITUDE_US) -> EdaDecomposition:
    """Tonic/phasic split plus skin-conductance responses.

    Tonic is a centered moving median (window shrinking at the edges),
    so tonic + phasic reconstructs the raw signal exactly.  An SCR is a
    rise of at least the threshold from a local trough to the next local
    peak within 5 s.
    """
    if stream.modality != Modality.EDA:
        raise ValueError("eda_decompose expects an EDA stream")
    t = stream.t
    raw = stream.channels[:, 0]
    half = max(1, int(round(median_window_s * stream.rate_hz / 2.0)))
    n = raw.size
    tonic = np.empty(n)
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        tonic[i] = np.median(raw[lo:hi])
    phasic = raw - tonic

    events: list[ScrEvent] = []
    trough_idx: int | None = None
    for i in range(1, n - 1):
        prev_v, cur, next_v = phasic[i - 1], phasic[i], phasic[i + 1]
        if cur <= prev_v and cur < next_v:
            trough_idx = i
        elif cur >= prev_v and cur > next_v and trough_idx is not None:
            rise = cur - phasic[trough_idx]
            within = t[i] - t[trough_idx] <= SCR_MAX_RISE_S
            if rise >= scr_threshold_us and within:
                events.append(ScrEvent(onset_s=float(t[trough_idx]),
                                       peak_s=float(t[i]),
                                       amplitude_us=float(rise)))
            trough_idx = None
    return EdaDecomposition(tonic, phasic, events)


# --- gaze ----------------------------------------------------------------------

FIXATION_DISPERSION_DEG = 1.0
FIXATION_MIN_DUR_MS = 100.0


@dataclass(frozen=True)
class Fixation:
    start_s: float
    end_s: float
    cx: float
    cy: float

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


def detect_fixations(stream: SensorStream,
                     dispersion_deg: float = FIXATION_DISPERSION_DEG,
                     min_dur_ms: float = FIXATION_MIN_DUR_MS,
                     fov_deg: float = 100.0) -> list[Fixation]:
    """Dispersion-threshold (I-DT) fixation detection.

    Window dispersion is (max-min x) + (max-min y) of the normalized
    gaze coordinates scaled by the field of view.  Invalid samples split
    windows.  A window that stops growing is emitted when it lasted at
    least min_dur_ms.
    """
    if stream.modality != Modality.GAZE:
        raise ValueError("detect_fixations expects a GAZE stream")
    t = stream.t
    x = stream.channels[:, 0]
    y = stream.channels[:, 1]
    valid = stream.channels[:, 3] > 0.5
    min_dur_s = min_dur_ms / 1000.0

    fixations: list[Fixation] = []

    def dispersion(i0: int, i1: int) -> float:
        xs = x[i0:i1 + 1]
        ys = y[i0:i1 + 1]
        return ((xs.max() - xs.min()) + (ys.max() - ys.min())) * fov_deg

    def emit(i0: int, i1: int):
        if t[i1] - t[i0] >= min_dur_s:
            fixations.append(Fixation(
                start_s=float(t[i0]), end_s=float(t[i1]),
                cx=float(x[i0:i1 + 1].mean()), cy=float(y[i0:i1 + 1].mean())))

    # contiguous valid runs
    run_start = None
    boundaries: list[tuple[int, int]] = []
    for i in range(len(t)):
        if valid[i]:
            if run_start is None:
                run_start = i
        elif run_start is not None:
            boundaries.append((run_start, i - 1))
            run_start = None
    if run_start is not None:
        boundaries.append((run_start, len(t) - 1))

    for lo, hi in boundaries:
        start = lo
        end = start
        while end < hi:
            if dispersion(start, end + 1) <= dispersion_deg:
                end += 1
                continue
            emit(start, end)
            start = end + 1
            end = start
        emit(start, end)
    return fixations


def gaze_heatmap(stream: SensorStream, grid: tuple[int, int] = (32, 32),
                 sigma_cells: float = 1.0) -> np.ndarray:
    """Smoothed spatial histogram of valid gaze samples, peak-normalized.

    Rows index y, columns x, both over the normalized [0, 1] extent.  An
    input with no valid samples yields an all-zero map.
    """
    if stream.modality != Modality.GAZE:
        raise ValueError("gaze_heatmap expects a GAZE stream")
    rows, cols = grid
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be >= 1")
    valid = stream.channels[:, 3] > 0.5
    x = np.clip(stream.channels[valid, 0], 0.0, 1.0)
    y = np.clip(stream.channels[valid, 1], 0.0, 1.0)
    hist, _, _ = np.histogram2d(y, x, bins=(rows, cols),
                                range=((0, 1), (0, 1)))
    if sigma_cells > 0:
        hist = ndimage.gaussian_filter(hist, sigma=sigma_cells, truncate=3.0)
    peak = hist.max()
    if peak > 0:
        hist = hist / peak
    return hist

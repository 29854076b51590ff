"""Device-clock sensor streams and their CSV interchange format.

File layout: ``#`` comment headers (stream_id, modality, rate_hz,
clock_id), a column header row ``t_dev,ch0[,ch1,...]``, then one sample
per line.  Sync marks are a dedicated ``MARK`` stream whose single
channel is the mark index, pairing with SYNC_MARK events in the session
log.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Modality(Enum):
    EDA = "EDA"        # skin conductance, uS
    BVP = "BVP"        # blood volume pulse, a.u.
    TEMP = "TEMP"      # skin temperature, C
    ACC = "ACC"        # 3-axis accelerometer, g
    FNIRS = "FNIRS"    # HbO/HbR/HbT per optode, uM
    GAZE = "GAZE"      # x_norm, y_norm, pupil mm, validity
    MARK = "MARK"      # sync mark indices


# fixed channel counts; FNIRS is any multiple of 3 (HbO/HbR/HbT per optode)
CHANNELS = {Modality.EDA: 1, Modality.BVP: 1, Modality.TEMP: 1,
            Modality.ACC: 3, Modality.GAZE: 4, Modality.MARK: 1}

DEFAULT_RATES = {Modality.EDA: 4.0, Modality.BVP: 64.0, Modality.TEMP: 4.0,
                 Modality.ACC: 32.0, Modality.FNIRS: 10.0,
                 Modality.GAZE: 200.0, Modality.MARK: 0.1}


class StreamFormatError(ValueError):
    pass


@dataclass
class SensorStream:
    stream_id: str
    modality: Modality
    rate_hz: float
    clock_id: str
    t: np.ndarray          # device-clock seconds, strictly increasing
    channels: np.ndarray   # shape (n_samples, n_channels)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.channels = np.atleast_2d(np.asarray(self.channels, dtype=float))
        if self.channels.shape[0] != self.t.shape[0]:
            self.channels = self.channels.T
        if self.t.ndim != 1 or self.channels.shape[0] != self.t.shape[0]:
            raise StreamFormatError(
                f"{self.stream_id}: sample/timestamp count mismatch")
        if self.t.size > 1 and not np.all(np.diff(self.t) > 0):
            raise StreamFormatError(
                f"{self.stream_id}: device timestamps not strictly increasing")
        expected = CHANNELS.get(self.modality)
        n_ch = self.channels.shape[1]
        if expected is not None and n_ch != expected:
            raise StreamFormatError(
                f"{self.stream_id}: {self.modality.value} needs {expected} "
                f"channels, got {n_ch}")
        if self.modality == Modality.FNIRS and (n_ch == 0 or n_ch % 3):
            raise StreamFormatError(
                f"{self.stream_id}: FNIRS channel count must be a multiple of 3")

    @property
    def n_samples(self) -> int:
        return int(self.t.size)

    @property
    def duration_s(self) -> float:
        return float(self.t[-1] - self.t[0]) if self.t.size else 0.0


def read_stream_csv(path: str) -> SensorStream:
    meta: dict[str, str] = {}
    t: list[float] = []
    rows: list[list[float]] = []
    header_seen = False
    with open(path, encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                if not line.lower().startswith("t_dev"):
                    raise StreamFormatError(
                        f"{path}:{lineno}: expected 't_dev,ch0,...' header")
                header_seen = True
                continue
            parts = line.split(",")
            try:
                t.append(float(parts[0]))
                rows.append([float(v) for v in parts[1:]])
            except ValueError:
                raise StreamFormatError(
                    f"{path}:{lineno}: non-numeric sample") from None
    for key in ("stream_id", "modality", "clock_id"):
        if key not in meta:
            raise StreamFormatError(f"{path}: missing '# {key}=...' header")
    try:
        modality = Modality(meta["modality"].upper())
    except ValueError:
        raise StreamFormatError(
            f"{path}: unknown modality {meta['modality']!r}") from None
    rate = float(meta.get("rate_hz", DEFAULT_RATES.get(modality, 0.0)))
    if not rows:
        raise StreamFormatError(f"{path}: no samples")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise StreamFormatError(f"{path}: ragged channel counts")
    return SensorStream(stream_id=meta["stream_id"], modality=modality,
                        rate_hz=rate, clock_id=meta["clock_id"],
                        t=np.array(t), channels=np.array(rows))


def write_stream_csv(path: str, stream: SensorStream):
    with open(path, "w", encoding="utf-8") as fp:
        fp.write(f"# stream_id={stream.stream_id}\n")
        fp.write(f"# modality={stream.modality.value}\n")
        fp.write(f"# rate_hz={stream.rate_hz}\n")
        fp.write(f"# clock_id={stream.clock_id}\n")
        cols = ",".join(f"ch{i}" for i in range(stream.channels.shape[1]))
        fp.write(f"t_dev,{cols}\n")
        for ti, row in zip(stream.t, stream.channels):
            values = ",".join(repr(float(v)) for v in row)
            fp.write(f"{float(ti)!r},{values}\n")

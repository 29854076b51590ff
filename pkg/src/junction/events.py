"""Event codes and the line-delimited session log.

A session log is a JSON header line followed by one JSON object per
record in emission order: external stimuli (joins, inputs, questionnaire
and n-back responses), simulator events, and periodic base64 snapshots
used for bitwise replay verification.  One file serves replay, metric
extraction, and sensor alignment.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import IO


class EventCode:
    EHMI_CHANGE = 1
    TAKEOVER_REQUEST = 2
    TAKEOVER_ENGAGE = 3
    TRIGGER_FIRED = 4
    CONFLICT_ENTER = 5
    CONFLICT_EXIT = 6
    SIGNAL_PHASE = 7
    QRESPONSE = 8
    NBACK_STIM = 9
    NBACK_RESP = 10
    SYNC_MARK = 11
    JOIN_REJECTED = 12
    DOOR_OPEN = 13
    DOOR_CLOSE = 14
    SEATED = 15
    WARNING = 16
    DIAGNOSTIC = 17
    QUESTIONNAIRE_START = 18
    NBACK_START = 19
    HAZARD = 20
    CROSSING_CUE = 21
    JOIN = 22
    # application-defined codes from EmitEvent triggers start here
    CUSTOM_BASE = 0x100


_NAMES = {v: k for k, v in vars(EventCode).items()
          if isinstance(v, int) and not k.startswith("_")}


def code_name(code: int) -> str:
    if code in _NAMES:
        return _NAMES[code]
    return f"CUSTOM_{code}"


def code_for_name(name: str) -> int:
    value = getattr(EventCode, name.upper(), None)
    if isinstance(value, int):
        return value
    if name.upper().startswith("CUSTOM_"):
        return int(name.split("_", 1)[1])
    # stable application code derived from the name
    h = 0
    for ch in name:
        h = (h * 131 + ord(ch)) & 0x7FFF
    return EventCode.CUSTOM_BASE + h


@dataclass(frozen=True)
class EventLogRecord:
    sim_time_us: int
    tick: int
    code: int
    subject: int = 0
    object_id: int = 0
    value: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        out = {"type": "event", "t_us": self.sim_time_us, "tick": self.tick,
               "code": self.code, "name": code_name(self.code),
               "subject": self.subject, "object": self.object_id,
               "value": self.value}
        if self.extra:
            out["extra"] = self.extra
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "EventLogRecord":
        return cls(sim_time_us=obj["t_us"], tick=obj["tick"], code=obj["code"],
                   subject=obj.get("subject", 0),
                   object_id=obj.get("object", 0),
                   value=obj.get("value", 0.0),
                   extra=obj.get("extra", {}))


@dataclass(frozen=True)
class LogHeader:
    scenario_hash: int
    seed: int
    tick_rate: int
    snapshot_div: int = 2
    scenario_text: str = ""  # embedded so replay is self-contained

    def to_json(self) -> dict:
        return {"type": "header", "scenario_hash": self.scenario_hash,
                "seed": self.seed, "tick_rate": self.tick_rate,
                "snapshot_div": self.snapshot_div,
                "scenario": self.scenario_text}

    @classmethod
    def from_json(cls, obj: dict) -> "LogHeader":
        return cls(scenario_hash=obj["scenario_hash"], seed=obj["seed"],
                   tick_rate=obj["tick_rate"],
                   snapshot_div=obj.get("snapshot_div", 2),
                   scenario_text=obj.get("scenario", ""))


class LogWriter:
    """Appends records in order; the caller owns flushing cadence."""

    def __init__(self, fp: IO[str], header: LogHeader):
        self._fp = fp
        self._fp.write(json.dumps(header.to_json()) + "\n")

    def event(self, rec: EventLogRecord):
        self._fp.write(json.dumps(rec.to_json()) + "\n")

    def stimulus(self, obj: dict):
        """Raw external stimulus record (join/input/qresponse/nback)."""
        self._fp.write(json.dumps(obj) + "\n")

    def snapshot(self, tick: int, data: bytes):
        self._fp.write(json.dumps({
            "type": "snapshot", "tick": tick,
            "data": base64.b64encode(data).decode()}) + "\n")

    def flush(self):
        self._fp.flush()


@dataclass
class SessionLog:
    """Fully parsed session log."""
    header: LogHeader
    records: list[dict]

    @property
    def events(self) -> list[EventLogRecord]:
        return [EventLogRecord.from_json(r) for r in self.records
                if r.get("type") == "event"]

    @property
    def stimuli(self) -> list[dict]:
        return [r for r in self.records
                if r.get("type") in ("input", "join", "qresponse", "nback", "bye")]

    @property
    def snapshots(self) -> list[tuple[int, bytes]]:
        return [(r["tick"], base64.b64decode(r["data"]))
                for r in self.records if r.get("type") == "snapshot"]


class LogFormatError(ValueError):
    pass


def read_log(fp: IO[str]) -> SessionLog:
    lines = iter(fp)
    try:
        first = json.loads(next(lines))
    except StopIteration:
        raise LogFormatError("empty log") from None
    except json.JSONDecodeError as e:
        raise LogFormatError(f"bad header line: {e}") from None
    if first.get("type") != "header":
        raise LogFormatError("first line is not a header record")
    records = []
    for i, line in enumerate(lines, start=2):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise LogFormatError(f"line {i}: {e}") from None
    return SessionLog(LogHeader.from_json(first), records)


def read_log_path(path: str) -> SessionLog:
    with open(path, encoding="utf-8") as fp:
        return read_log(fp)

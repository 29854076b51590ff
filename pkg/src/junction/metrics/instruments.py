"""Scoring for the in-simulation psychological instruments and N-back.

Instrument indices on the wire: 0 TLX, 1 PANAS, 2 valence-arousal,
3 momentary stress, 4 time perception.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

INSTRUMENT_NAMES = ("TLX", "PANAS", "VA", "STRESS", "TIMEPERC")

TLX_ITEMS = 6
PANAS_ITEMS = 20
# Positive-affect item positions in the standard 20-item schedule (0-based).
PANAS_POSITIVE = frozenset({0, 2, 4, 8, 9, 11, 13, 15, 16, 18})


@dataclass(frozen=True)
class InstrumentResponse:
    instrument: str
    item: int
    value: float
    sim_time_s: float = 0.0


@dataclass
class InstrumentScores:
    tlx_raw: float | None = None
    panas_pa: float | None = None
    panas_na: float | None = None
    valence: float | None = None
    arousal: float | None = None
    stress: float | None = None
    time_perception_ratio: float | None = None
    perceived_s: float | None = None
    incomplete: list[str] = field(default_factory=list)


def score_instruments(responses: list[InstrumentResponse],
                      actual_duration_s: float | None = None) -> InstrumentScores:
    """Score one administration.  Permutation-invariant over arrival order.

    Duplicate items keep the latest response.  Incomplete instruments are
    flagged and left unscored; nothing is imputed.  The time-perception
    ratio needs the actual probed duration.
    """
    scores = InstrumentScores()
    by_instrument: dict[str, dict[int, float]] = {}
    for r in sorted(responses, key=lambda r: r.sim_time_s):
        by_instrument.setdefault(r.instrument, {})[r.item] = r.value

    tlx = by_instrument.get("TLX")
    if tlx is not None:
        if len(tlx) == TLX_ITEMS and set(tlx) == set(range(TLX_ITEMS)):
            scores.tlx_raw = sum(tlx.values()) / TLX_ITEMS
        else:
            scores.incomplete.append("TLX")

    panas = by_instrument.get("PANAS")
    if panas is not None:
        if len(panas) == PANAS_ITEMS and set(panas) == set(range(PANAS_ITEMS)):
            scores.panas_pa = sum(v for i, v in panas.items()
                                  if i in PANAS_POSITIVE)
            scores.panas_na = sum(v for i, v in panas.items()
                                  if i not in PANAS_POSITIVE)
        else:
            scores.incomplete.append("PANAS")

    va = by_instrument.get("VA")
    if va is not None:
        if set(va) == {0, 1}:
            scores.valence = va[0]
            scores.arousal = va[1]
        else:
            scores.incomplete.append("VA")

    stress = by_instrument.get("STRESS")
    if stress is not None:
        if 0 in stress:
            scores.stress = stress[0]
        else:
            scores.incomplete.append("STRESS")

    tp = by_instrument.get("TIMEPERC")
    if tp is not None:
        if 0 in tp and tp[0] > 0:
            scores.perceived_s = tp[0]
            if actual_duration_s and actual_duration_s > 0:
                scores.time_perception_ratio = tp[0] / actual_duration_s
        else:
            scores.incomplete.append("TIMEPERC")

    return scores


# --- N-back ----------------------------------------------------------------

NBACK_RESPONSE_WINDOW_S = 2.5


@dataclass(frozen=True)
class NbackStimulus:
    t: float
    symbol: int


@dataclass
class NbackResult:
    hits: int = 0
    misses: int = 0
    false_alarms: int = 0
    correct_rejections: int = 0
    omissions: int = 0
    accuracy: float = 0.0
    mean_rt: float | None = None
    stray_responses: int = 0


def grade_nback(stimuli: list[NbackStimulus], response_times: list[float],
                n: int, window_s: float = NBACK_RESPONSE_WINDOW_S) -> NbackResult:
    """Grade an n-back run from stimulus onsets and response timestamps.

    A stimulus is a target iff it equals the one n positions earlier.
    Each response is credited to the most recent stimulus within the
    response window; at most one response counts per stimulus.  An
    omission is a target with no in-window response (the miss count, kept
    under both names for reporting).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    stimuli = sorted(stimuli, key=lambda s: s.t)
    matched: dict[int, float] = {}  # stimulus index -> reaction time
    stray = 0
    for rt_time in sorted(response_times):
        candidate = None
        for i, stim in enumerate(stimuli):
            if stim.t <= rt_time <= stim.t + window_s:
                candidate = i
            elif stim.t > rt_time:
                break
        if candidate is None or candidate in matched:
            stray += 1
            continue
        matched[candidate] = rt_time - stimuli[candidate].t

    result = NbackResult(stray_responses=stray)
    rts = []
    for i, stim in enumerate(stimuli):
        is_target = i >= n and stim.symbol == stimuli[i - n].symbol
        responded = i in matched
        if is_target and responded:
            result.hits += 1
            rts.append(matched[i])
        elif is_target:
            result.misses += 1
        elif responded:
            result.false_alarms += 1
        else:
            result.correct_rejections += 1
    result.omissions = result.misses
    total = len(stimuli)
    if total:
        result.accuracy = (result.hits + result.correct_rejections) / total
    if rts:
        result.mean_rt = math.fsum(rts) / len(rts)
    return result

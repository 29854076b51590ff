"""Trajectory reconstruction from a session log.

Metrics never trust broadcast snapshots: the replay machinery re-runs
the simulation from the recorded stimuli, which yields full-precision
state at every tick and guarantees post-hoc analysis sees exactly what
the live session computed.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..events import SessionLog
from ..server import replay
from ..world import AgentState


@dataclass(frozen=True)
class TrajectorySample:
    tick: int
    sim_time_us: int
    agent_id: int
    state: AgentState

    @property
    def sim_time_s(self) -> float:
        return self.sim_time_us / 1e6


def reconstruct(log: SessionLog, spec=None,
                every: int = 1) -> dict[int, list[TrajectorySample]]:
    """Per-agent trajectories (uniform tick spacing) rebuilt via replay."""
    rate = log.header.tick_rate
    out: dict[int, list[TrajectorySample]] = {}

    def collect(tick: int, world: dict[int, AgentState]):
        if tick % every:
            return
        t_us = tick * 1_000_000 // rate
        for aid in sorted(world):
            out.setdefault(aid, []).append(
                TrajectorySample(tick, t_us, aid, world[aid]))

    replay(log, spec=spec, collect_world=collect)
    return out

/**
 * Snapshot ring buffer with delayed interpolation.
 *
 * The view renders the authoritative world as it was `delayMs` ago,
 * interpolating between the two snapshots that bracket the render time.
 * If snapshots stop arriving the state is extrapolated for at most
 * `maxExtrapolationMs`, then frozen with a stale flag.
 */

import type { AgentRecord, Snapshot } from "./protocol.js";

export interface RenderAgent extends AgentRecord {
  stale: boolean;
}

export interface RenderWorld {
  agents: RenderAgent[];
  simTimeUs: number;
  stale: boolean;
}

function wrapAngle(theta: number): number {
  let t = theta % (2 * Math.PI);
  if (t <= -Math.PI) t += 2 * Math.PI;
  else if (t > Math.PI) t -= 2 * Math.PI;
  return t;
}

function lerpAngle(a: number, b: number, t: number): number {
  return wrapAngle(a + wrapAngle(b - a) * t);
}

interface Entry {
  receivedMs: number; // local wall clock when the snapshot completed
  snapshot: Snapshot;
}

export class SnapshotBuffer {
  private entries: Entry[] = [];
  private pendingFragments: Snapshot | null = null;

  constructor(
    public delayMs = 100,
    public maxExtrapolationMs = 100,
    private capacity = 64,
  ) {}

  /** Feed one decoded snapshot (fragments are reassembled by tick). */
  push(snapshot: Snapshot, nowMs: number): void {
    if (this.pendingFragments && this.pendingFragments.tick === snapshot.tick) {
      this.pendingFragments.records.push(...snapshot.records);
      if (snapshot.moreFragments) return;
      snapshot = this.pendingFragments;
      this.pendingFragments = null;
    } else if (snapshot.moreFragments) {
      this.pendingFragments = {
        ...snapshot,
        records: [...snapshot.records],
      };
      return;
    }
    const last = this.entries[this.entries.length - 1];
    if (last && snapshot.tick <= last.snapshot.tick) return; // stale/dup
    this.entries.push({ receivedMs: nowMs, snapshot });
    if (this.entries.length > this.capacity) this.entries.shift();
  }

  get latest(): Snapshot | null {
    return this.entries.length
      ? this.entries[this.entries.length - 1].snapshot
      : null;
  }

  /** Interpolated world for the given local render time. */
  sample(nowMs: number): RenderWorld | null {
    if (this.entries.length === 0) return null;
    const renderMs = nowMs - this.delayMs;
    const entries = this.entries;

    // bracket renderMs between consecutive snapshots
    let after = -1;
    for (let i = 0; i < entries.length; i++) {
      if (entries[i].receivedMs >= renderMs) {
        after = i;
        break;
      }
    }
    if (after > 0) {
      const a = entries[after - 1];
      const b = entries[after];
      const span = b.receivedMs - a.receivedMs;
      const t = span > 0 ? (renderMs - a.receivedMs) / span : 1;
      return this.interpolate(a.snapshot, b.snapshot, t);
    }
    if (after === 0) {
      // render time precedes the buffer: show the oldest as-is
      return this.still(entries[0].snapshot, false);
    }
    // render time is past the newest snapshot: extrapolate, then freeze
    const last = entries[entries.length - 1];
    const aheadMs = renderMs - last.receivedMs;
    if (aheadMs <= this.maxExtrapolationMs) {
      return this.extrapolate(last.snapshot, aheadMs / 1000);
    }
    return this.still(last.snapshot, true);
  }

  private still(snapshot: Snapshot, stale: boolean): RenderWorld {
    return {
      agents: snapshot.records.map((r) => ({ ...r, stale })),
      simTimeUs: snapshot.simTimeUs,
      stale,
    };
  }

  private interpolate(a: Snapshot, b: Snapshot, t: number): RenderWorld {
    const prev = new Map(a.records.map((r) => [r.agentId, r]));
    const agents: RenderAgent[] = b.records.map((rec) => {
      const p = prev.get(rec.agentId);
      if (!p) return { ...rec, stale: false };
      return {
        ...rec,
        x: p.x + (rec.x - p.x) * t,
        y: p.y + (rec.y - p.y) * t,
        heading: lerpAngle(p.heading, rec.heading, t),
        speed: p.speed + (rec.speed - p.speed) * t,
        stale: false,
      };
    });
    return {
      agents,
      simTimeUs: a.simTimeUs + (b.simTimeUs - a.simTimeUs) * t,
      stale: false,
    };
  }

  private extrapolate(snapshot: Snapshot, aheadS: number): RenderWorld {
    const agents: RenderAgent[] = snapshot.records.map((r) => ({
      ...r,
      x: r.x + Math.cos(r.heading) * r.speed * aheadS,
      y: r.y + Math.sin(r.heading) * r.speed * aheadS,
      heading: wrapAngle(r.heading + r.yawRate * aheadS),
      stale: false,
    }));
    return {
      agents,
      simTimeUs: snapshot.simTimeUs + aheadS * 1e6,
      stale: false,
    };
  }
}

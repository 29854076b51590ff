/**
 * NTP-style clock offset estimation over PING/PONG exchanges.
 *
 * offset = ((t1 - t0) + (t2 - t3)) / 2 truncated toward zero;
 * delay = (t3 - t0) - (t2 - t1). The estimate is the offset of the
 * minimum-delay sample within a trailing window.
 */

export interface ClockSample {
  t0: number;
  t1: number;
  t2: number;
  t3: number;
}

export function sampleOffsetUs(s: ClockSample): number {
  const num = s.t1 - s.t0 + (s.t2 - s.t3);
  return Math.trunc(num / 2);
}

export function sampleDelayUs(s: ClockSample): number {
  return s.t3 - s.t0 - (s.t2 - s.t1);
}

export function estimateOffset(
  samples: ClockSample[],
  window = 8,
): { offsetUs: number; delayUs: number } {
  if (samples.length === 0) throw new Error("no clock samples");
  const recent = window > 0 ? samples.slice(-window) : samples;
  let best = recent[0];
  for (const s of recent.slice(1)) {
    if (sampleDelayUs(s) < sampleDelayUs(best)) best = s;
  }
  return { offsetUs: sampleOffsetUs(best), delayUs: sampleDelayUs(best) };
}

export class ClockSync {
  private samples: ClockSample[] = [];

  add(sample: ClockSample): void {
    this.samples.push(sample);
    if (this.samples.length > 64) this.samples.shift();
  }

  get ready(): boolean {
    return this.samples.length > 0;
  }

  estimate(): { offsetUs: number; delayUs: number } {
    return estimateOffset(this.samples);
  }

  /** Server clock value corresponding to a local microsecond stamp. */
  toServerUs(localUs: number): number {
    return localUs + this.estimate().offsetUs;
  }
}

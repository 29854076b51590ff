/**
 * N-back task client: stimulus log, local response capture, and a
 * client-side grading expectation (the server grade is authoritative;
 * this one exists to cross-check it and to give immediate feedback).
 */

export interface NbackStim {
  t: number; // local seconds
  symbol: number;
}

export interface NbackGrade {
  hits: number;
  misses: number;
  falseAlarms: number;
  correctRejections: number;
  omissions: number;
  accuracy: number;
  meanRt: number | null;
}

export const NBACK_WINDOW_S = 2.5;

export class NbackTask {
  stimuli: NbackStim[] = [];
  responses: number[] = [];

  constructor(
    public n: number,
    public expectedLength: number | null = null,
  ) {}

  addStimulus(symbol: number, t: number): void {
    this.stimuli.push({ t, symbol });
  }

  /** True when the current stimulus matches the one n back. */
  isCurrentTarget(): boolean {
    const i = this.stimuli.length - 1;
    return (
      i >= this.n && this.stimuli[i].symbol === this.stimuli[i - this.n].symbol
    );
  }

  respond(t: number): void {
    this.responses.push(t);
  }

  get complete(): boolean {
    return (
      this.expectedLength !== null &&
      this.stimuli.length >= this.expectedLength
    );
  }

  grade(windowS: number = NBACK_WINDOW_S): NbackGrade {
    return gradeNback(this.stimuli, this.responses, this.n, windowS);
  }
}

/**
 * Grade a run: each response credits the most recent stimulus whose
 * response window contains it, one response per stimulus; a target is a
 * stimulus equal to the one n positions earlier; omissions are targets
 * without an in-window response (the miss count, reported under both
 * names, matching the server).
 */
export function gradeNback(
  stimuli: NbackStim[],
  responses: number[],
  n: number,
  windowS: number = NBACK_WINDOW_S,
): NbackGrade {
  const stims = [...stimuli].sort((a, b) => a.t - b.t);
  const matched = new Map<number, number>();
  for (const r of [...responses].sort((a, b) => a - b)) {
    let candidate = -1;
    for (let i = 0; i < stims.length; i++) {
      if (stims[i].t <= r && r <= stims[i].t + windowS) candidate = i;
      else if (stims[i].t > r) break;
    }
    if (candidate < 0 || matched.has(candidate)) continue;
    matched.set(candidate, r - stims[candidate].t);
  }
  const grade: NbackGrade = {
    hits: 0,
    misses: 0,
    falseAlarms: 0,
    correctRejections: 0,
    omissions: 0,
    accuracy: 0,
    meanRt: null,
  };
  const rts: number[] = [];
  stims.forEach((stim, i) => {
    const target = i >= n && stim.symbol === stims[i - n].symbol;
    const responded = matched.has(i);
    if (target && responded) {
      grade.hits += 1;
      rts.push(matched.get(i)!);
    } else if (target) {
      grade.misses += 1;
    } else if (responded) {
      grade.falseAlarms += 1;
    } else {
      grade.correctRejections += 1;
    }
  });
  grade.omissions = grade.misses;
  if (stims.length > 0) {
    grade.accuracy = (grade.hits + grade.correctRejections) / stims.length;
  }
  if (rts.length > 0) {
    grade.meanRt = rts.reduce((a, b) => a + b, 0) / rts.length;
  }
  return grade;
}

/**
 * In-session instrument state: which panel is open, which answers are
 * pending acknowledgment, and the local answer echo.
 *
 * Answers are sent as QRESPONSE messages and kept in the pending set
 * until the matching QRESPONSE event comes back in the event stream;
 * input capture stays paused while a panel is open.
 */

export enum Instrument {
  TLX = 0,
  PANAS = 1,
  VA = 2,
  STRESS = 3,
  TIMEPERC = 4,
}

export const INSTRUMENT_ITEM_COUNT: Record<Instrument, number> = {
  [Instrument.TLX]: 6,
  [Instrument.PANAS]: 20,
  [Instrument.VA]: 2,
  [Instrument.STRESS]: 1,
  [Instrument.TIMEPERC]: 1,
};

export interface PendingAnswer {
  instrument: Instrument;
  item: number;
  value: number;
  seq: number;
}

export class PromptState {
  open: Instrument | null = null;
  answers = new Map<string, number>(); // "instrument:item" -> value
  pending = new Map<number, PendingAnswer>(); // by seq
  acknowledged = new Map<string, number>();
  takeoverPrompt = false;

  get inputPaused(): boolean {
    return this.open !== null;
  }

  openPanel(instrument: Instrument): void {
    this.open = instrument;
  }

  setAnswer(instrument: Instrument, item: number, value: number): void {
    this.answers.set(`${instrument}:${item}`, value);
  }

  getAnswer(instrument: Instrument, item: number): number | undefined {
    return this.answers.get(`${instrument}:${item}`);
  }

  /** All items answered for the open instrument? */
  get complete(): boolean {
    if (this.open === null) return false;
    const count = INSTRUMENT_ITEM_COUNT[this.open];
    for (let i = 0; i < count; i++) {
      if (!this.answers.has(`${this.open}:${i}`)) return false;
    }
    return true;
  }

  /** Answers to transmit; caller encodes one QRESPONSE per entry. */
  submit(nextSeq: () => number): PendingAnswer[] {
    if (this.open === null || !this.complete) return [];
    const instrument = this.open;
    const out: PendingAnswer[] = [];
    for (let i = 0; i < INSTRUMENT_ITEM_COUNT[instrument]; i++) {
      const value = this.answers.get(`${instrument}:${i}`)!;
      const entry = { instrument, item: i, value, seq: nextSeq() };
      this.pending.set(entry.seq, entry);
      out.push(entry);
    }
    this.open = null;
    return out;
  }

  /** Match a QRESPONSE event echo against the pending set. */
  acknowledge(instrument: number, item: number, value: number): void {
    for (const [seq, p] of this.pending) {
      if (p.instrument === instrument && p.item === item) {
        this.pending.delete(seq);
        this.acknowledged.set(`${instrument}:${item}`, value);
        return;
      }
    }
  }

  get allAcknowledged(): boolean {
    return this.pending.size === 0;
  }
}

/** Raw TLX score the participant should expect (mean of six 0-100). */
export function tlxMean(values: number[]): number {
  if (values.length !== 6) throw new Error("TLX needs exactly 6 items");
  return values.reduce((a, b) => a + b, 0) / 6;
}

import { describe, expect, it } from "vitest";
import { Instrument, PromptState, tlxMean } from "../src/prompts.js";

describe("prompt state", () => {
  it("pauses input while a panel is open", () => {
    const state = new PromptState();
    expect(state.inputPaused).toBe(false);
    state.openPanel(Instrument.TLX);
    expect(state.inputPaused).toBe(true);
  });

  it("TLX requires all six items before submit", () => {
    const state = new PromptState();
    state.openPanel(Instrument.TLX);
    for (let i = 0; i < 5; i++) state.setAnswer(Instrument.TLX, i, 50);
    expect(state.complete).toBe(false);
    let seq = 0;
    expect(state.submit(() => ++seq)).toEqual([]);
    state.setAnswer(Instrument.TLX, 5, 50);
    expect(state.complete).toBe(true);
    const sent = state.submit(() => ++seq);
    expect(sent).toHaveLength(6);
    expect(state.inputPaused).toBe(false); // panel closed on submit
  });

  it("answers stay pending until the event stream echoes them", () => {
    const state = new PromptState();
    state.openPanel(Instrument.VA);
    state.setAnswer(Instrument.VA, 0, 0.5);
    state.setAnswer(Instrument.VA, 1, -0.25);
    let seq = 10;
    const sent = state.submit(() => ++seq);
    expect(sent.map((s) => s.seq)).toEqual([11, 12]);
    expect(state.allAcknowledged).toBe(false);
    state.acknowledge(Instrument.VA, 0, 0.5);
    expect(state.allAcknowledged).toBe(false);
    state.acknowledge(Instrument.VA, 1, -0.25);
    expect(state.allAcknowledged).toBe(true);
  });

  it("stress and time perception are single-item", () => {
    const state = new PromptState();
    state.openPanel(Instrument.STRESS);
    state.setAnswer(Instrument.STRESS, 0, 7);
    expect(state.complete).toBe(true);
  });
});

describe("tlx mean", () => {
  it("matches the raw-TLX expectation", () => {
    expect(tlxMean([50, 50, 50, 50, 50, 50])).toBe(50);
    expect(tlxMean([0, 20, 40, 60, 80, 100])).toBe(50);
    expect(tlxMean([30, 40, 50, 60, 70, 80])).toBeCloseTo(55, 9);
  });

  it("rejects partial administrations", () => {
    expect(() => tlxMean([50, 50])).toThrow();
  });
});

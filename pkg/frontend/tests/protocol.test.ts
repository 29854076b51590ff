/**
 * Codec tests against golden byte vectors generated by the server's
 * reference implementation (tests/fixtures/packets.json): client-sent
 * messages must encode byte-identically, server-sent messages must
 * decode to the exact field values.
 */

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";
import {
  AgentKind,
  KIND_NONE,
  decode,
  defaultMeta,
  encodeBye,
  encodeHello,
  encodeInput,
  encodeNbackResponse,
  encodePing,
  encodeQResponse,
  type Meta,
} from "../src/protocol.js";

const fixtures = JSON.parse(
  readFileSync(new URL("./fixtures/packets.json", import.meta.url), "utf-8"),
);

const hex = (bytes: Uint8Array): string =>
  Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");

const meta = (overrides: Partial<Meta>): Meta => ({
  ...defaultMeta(),
  session: 7,
  ...overrides,
});

describe("client-to-server encoding matches the reference bytes", () => {
  it("hello", () => {
    const out = encodeHello(AgentKind.Pedestrian, "walker",
      meta({ seq: 1, timestampUs: 123456 }));
    expect(hex(out)).toBe(fixtures.hello_pedestrian.hex);
  });

  it("driver input", () => {
    const out = encodeInput(
      { kind: "driver", steerWheel: 0.25, throttle: 0.5, brake: 0.0, gear: 2 },
      42,
      meta({ agentId: 1, seq: 9, timestampUs: 999, kind: AgentKind.Driver }),
    );
    expect(hex(out)).toBe(fixtures.input_driver.hex);
  });

  it("cyclist input", () => {
    const out = encodeInput(
      { kind: "cyclist", power: 150, cadence: 82.5, steer: -0.125,
        brake: 0.25, assistLevel: 2 },
      7,
      meta({ agentId: 2, seq: 3, timestampUs: 1000, kind: AgentKind.Cyclist }),
    );
    expect(hex(out)).toBe(fixtures.input_cyclist.hex);
  });

  it("pedestrian input", () => {
    const out = encodeInput(
      { kind: "pedestrian", walkSpeed: 1.5, walkHeading: -1.5,
        seatedRequest: true },
      11,
      meta({ agentId: 3, seq: 5, timestampUs: 2000,
             kind: AgentKind.Pedestrian }),
    );
    expect(hex(out)).toBe(fixtures.input_pedestrian.hex);
  });

  it("pedestrian input defaults its kind byte", () => {
    const out = encodeInput(
      { kind: "pedestrian", walkSpeed: 1.5, walkHeading: -1.5,
        seatedRequest: true },
      11,
      meta({ agentId: 3, seq: 5, timestampUs: 2000, kind: KIND_NONE }),
    );
    expect(hex(out)).toBe(fixtures.input_pedestrian.hex);
  });

  it("ping", () => {
    const out = encodePing(777, meta({ agentId: 3, seq: 2, timestampUs: 777 }));
    expect(hex(out)).toBe(fixtures.ping.hex);
  });

  it("qresponse", () => {
    const out = encodeQResponse(0, 4, 62.5,
      meta({ agentId: 3, seq: 6, timestampUs: 3000 }));
    expect(hex(out)).toBe(fixtures.qresponse_tlx.hex);
  });

  it("nback response", () => {
    const out = encodeNbackResponse(66, 0.75,
      meta({ agentId: 3, seq: 7, timestampUs: 4000 }));
    expect(hex(out)).toBe(fixtures.nback_response.hex);
  });

  it("bye", () => {
    const out = encodeBye(meta({ agentId: 3, seq: 8, timestampUs: 5000 }));
    expect(hex(out)).toBe(fixtures.bye.hex);
    expect(out.length).toBe(24);
  });
});

function fromHex(s: string): Uint8Array {
  const out = new Uint8Array(s.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(s.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}

describe("server-to-client decoding", () => {
  it("welcome", () => {
    const msg = decode(fromHex(fixtures.welcome.hex));
    expect(msg.type).toBe("welcome");
    if (msg.type !== "welcome") return;
    expect(msg.body.assignedAgentId).toBe(3);
    expect(msg.body.tickRateHz).toBe(100);
    expect(msg.body.snapshotDiv).toBe(2);
    expect(msg.body.scenarioHash).toBe(0xdeadbeefcafe1234n);
  });

  it("snapshot with records", () => {
    const msg = decode(fromHex(fixtures.snapshot_two_records.hex));
    expect(msg.type).toBe("snapshot");
    if (msg.type !== "snapshot") return;
    expect(msg.body.tick).toBe(120);
    expect(msg.body.simTimeUs).toBe(1_200_000);
    expect(msg.body.records).toHaveLength(2);
    const [a, b] = msg.body.records;
    expect(a).toMatchObject(
      { agentId: 1, kind: 0, flags: 0x12, x: -50.0, y: 0.25, speed: 8.25 });
    expect(b.agentId).toBe(3);
    expect(b.heading).toBeCloseTo(-1.5707963705062866, 12);
    expect(b.aux).toBeCloseTo(2.142857074737549, 12);
    expect(msg.body.moreFragments).toBe(false);
  });

  it("event", () => {
    const msg = decode(fromHex(fixtures.event_ehmi.hex));
    expect(msg.type).toBe("event");
    if (msg.type !== "event") return;
    expect(msg.body).toEqual({ code: 1, subject: 2, object: 0, value: 21.0 });
  });

  it("pong", () => {
    const msg = decode(fromHex(fixtures.pong.hex));
    expect(msg.type).toBe("pong");
    if (msg.type !== "pong") return;
    expect(msg.body).toEqual({ t0: 777, t1: 888, t2: 999 });
  });

  it("rejects bad magic", () => {
    const data = fromHex(fixtures.welcome.hex);
    data[0] ^= 0xff;
    expect(() => decode(data)).toThrow(/magic/);
  });

  it("rejects truncation", () => {
    const data = fromHex(fixtures.snapshot_two_records.hex);
    expect(() => decode(data.slice(0, 30))).toThrow(/truncated/);
  });
});

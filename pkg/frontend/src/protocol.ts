/**
 * Binary wire codec, byte-identical to the server's layout.
 *
 * 24-byte little-endian header: magic u32 0x53494D31, version u8,
 * msg_type u8, flags u8, kind u8, session u16, agent_id u16, seq u32,
 * timestamp_us u64 — then a typed payload. The WebSocket bridge carries
 * exactly these bytes as single binary frames.
 */

export const MAGIC = 0x53494d31;
export const VERSION = 1;
export const KIND_NONE = 0xff;
export const BROADCAST_AGENT = 0xffff;
export const HEADER_SIZE = 24;

/** Encoded datagram backed by a plain ArrayBuffer (WebSocket-sendable). */
export type Bytes = Uint8Array<ArrayBuffer>;

export enum MsgType {
  HELLO = 0x01,
  WELCOME = 0x02,
  INPUT = 0x03,
  SNAPSHOT = 0x04,
  EVENT = 0x05,
  PING = 0x06,
  PONG = 0x07,
  QRESPONSE = 0x08,
  NBACK = 0x09,
  BYE = 0x0f,
}

export enum AgentKind {
  Driver = 0,
  AutomatedVehicle = 1,
  Cyclist = 2,
  Pedestrian = 3,
  TransitUser = 4,
}

// AgentRecord flag bits (mirror of the server's layout)
export const FLAG_YIELDING = 0x01;
export const FLAG_BRAKING = 0x02;
export const FLAG_IN_CONFLICT_ZONE = 0x04;
export const FLAG_SEATED = 0x08;
export const FLAG_HUMAN_AUTHORITY = 0x10;
export const FLAG_EHMI_PROJECTION = 0x20;
export const FLAG_EHMI_LIGHT_SHIFT = 6;

export interface Meta {
  session: number;
  agentId: number;
  seq: number;
  timestampUs: number;
  flags: number;
  kind: number;
}

export const defaultMeta = (): Meta => ({
  session: 0,
  agentId: 0,
  seq: 0,
  timestampUs: 0,
  flags: 0,
  kind: KIND_NONE,
});

export interface DriverControl {
  kind: "driver";
  steerWheel: number;
  throttle: number;
  brake: number;
  gear: number;
}

export interface CyclistControl {
  kind: "cyclist";
  power: number;
  cadence: number;
  steer: number;
  brake: number;
  assistLevel: number; // 0 off, 1 eco, 2 tour, 3 turbo
}

export interface PedestrianControl {
  kind: "pedestrian";
  walkSpeed: number;
  walkHeading: number;
  seatedRequest: boolean;
}

export type Control = DriverControl | CyclistControl | PedestrianControl;

export interface AgentRecord {
  agentId: number;
  kind: AgentKind;
  flags: number;
  x: number;
  y: number;
  heading: number;
  speed: number;
  yawRate: number;
  aux: number;
}

export interface Snapshot {
  tick: number;
  simTimeUs: number;
  records: AgentRecord[];
  moreFragments: boolean;
}

export interface Welcome {
  assignedAgentId: number;
  tickRateHz: number;
  snapshotDiv: number;
  scenarioHash: bigint;
}

export interface EventMsg {
  code: number;
  subject: number;
  object: number;
  value: number;
}

export interface Pong {
  t0: number;
  t1: number;
  t2: number;
}

export type ServerMessage =
  | { type: "welcome"; meta: Meta; body: Welcome }
  | { type: "snapshot"; meta: Meta; body: Snapshot }
  | { type: "event"; meta: Meta; body: EventMsg }
  | { type: "pong"; meta: Meta; body: Pong }
  | { type: "nback_stim"; meta: Meta; symbol: number }
  | { type: "other"; meta: Meta; msgType: number };

function header(view: DataView, msgType: number, meta: Meta): void {
  view.setUint32(0, MAGIC, true);
  view.setUint8(4, VERSION);
  view.setUint8(5, msgType);
  view.setUint8(6, meta.flags);
  view.setUint8(7, meta.kind);
  view.setUint16(8, meta.session, true);
  view.setUint16(10, meta.agentId, true);
  view.setUint32(12, meta.seq, true);
  view.setBigUint64(16, BigInt(Math.round(meta.timestampUs)), true);
}

export function encodeHello(role: AgentKind, displayName: string, meta: Meta): Bytes {
  const name = new TextEncoder().encode(displayName);
  if (name.length > 32) throw new Error("display name over 32 bytes");
  const out = new Uint8Array(HEADER_SIZE + 2 + name.length);
  const view = new DataView(out.buffer);
  header(view, MsgType.HELLO, { ...meta, kind: KIND_NONE });
  view.setUint8(24, role);
  view.setUint8(25, name.length);
  out.set(name, 26);
  return out;
}

export function encodeInput(control: Control, clientTickHint: number, meta: Meta): Bytes {
  let payload: number;
  let kind: number;
  switch (control.kind) {
    case "driver":
      payload = 21;
      kind = AgentKind.Driver;
      break;
    case "cyclist":
      payload = 25;
      kind = AgentKind.Cyclist;
      break;
    case "pedestrian":
      payload = 17;
      kind = AgentKind.Pedestrian;
      break;
  }
  if (meta.kind !== KIND_NONE) kind = meta.kind;
  const out = new Uint8Array(HEADER_SIZE + payload);
  const view = new DataView(out.buffer);
  header(view, MsgType.INPUT, { ...meta, kind });
  let off = 24;
  if (control.kind === "driver") {
    view.setFloat32(off, control.steerWheel, true);
    view.setFloat32(off + 4, control.throttle, true);
    view.setFloat32(off + 8, control.brake, true);
    view.setInt8(off + 12, control.gear);
    off += 13;
  } else if (control.kind === "cyclist") {
    view.setFloat32(off, control.power, true);
    view.setFloat32(off + 4, control.cadence, true);
    view.setFloat32(off + 8, control.steer, true);
    view.setFloat32(off + 12, control.brake, true);
    view.setUint8(off + 16, control.assistLevel);
    off += 17;
  } else {
    view.setFloat32(off, control.walkSpeed, true);
    view.setFloat32(off + 4, control.walkHeading, true);
    view.setUint8(off + 8, control.seatedRequest ? 1 : 0);
    off += 9;
  }
  view.setBigUint64(off, BigInt(clientTickHint), true);
  return out;
}

export function encodePing(t0: number, meta: Meta): Bytes {
  const out = new Uint8Array(HEADER_SIZE + 8);
  const view = new DataView(out.buffer);
  header(view, MsgType.PING, meta);
  view.setBigUint64(24, BigInt(Math.round(t0)), true);
  return out;
}

export function encodeQResponse(
  instrument: number,
  item: number,
  value: number,
  meta: Meta,
): Bytes {
  const out = new Uint8Array(HEADER_SIZE + 6);
  const view = new DataView(out.buffer);
  header(view, MsgType.QRESPONSE, meta);
  view.setUint8(24, instrument);
  view.setUint8(25, item);
  view.setFloat32(26, value, true);
  return out;
}

export const NBACK_STIMULUS = 0;
export const NBACK_RESPONSE = 1;

export function encodeNbackResponse(symbol: number, rtHint: number, meta: Meta): Bytes {
  const out = new Uint8Array(HEADER_SIZE + 6);
  const view = new DataView(out.buffer);
  header(view, MsgType.NBACK, meta);
  view.setUint8(24, NBACK_RESPONSE);
  view.setUint8(25, symbol);
  view.setFloat32(26, rtHint, true);
  return out;
}

export function encodeBye(meta: Meta): Bytes {
  const out = new Uint8Array(HEADER_SIZE);
  header(new DataView(out.buffer), MsgType.BYE, meta);
  return out;
}

export class ProtocolError extends Error {}

function need(view: DataView, upTo: number): void {
  if (view.byteLength < upTo) {
    throw new ProtocolError(`truncated: need ${upTo}, have ${view.byteLength}`);
  }
}

export function decode(data: ArrayBuffer | Uint8Array): ServerMessage {
  const buf = data instanceof Uint8Array
    ? new DataView(data.buffer, data.byteOffset, data.byteLength)
    : new DataView(data);
  need(buf, HEADER_SIZE);
  if (buf.getUint32(0, true) !== MAGIC) throw new ProtocolError("bad magic");
  if (buf.getUint8(4) !== VERSION) throw new ProtocolError("bad version");
  const msgType = buf.getUint8(5);
  const meta: Meta = {
    flags: buf.getUint8(6),
    kind: buf.getUint8(7),
    session: buf.getUint16(8, true),
    agentId: buf.getUint16(10, true),
    seq: buf.getUint32(12, true),
    timestampUs: Number(buf.getBigUint64(16, true)),
  };
  const off = HEADER_SIZE;
  switch (msgType) {
    case MsgType.WELCOME: {
      need(buf, off + 13);
      return {
        type: "welcome",
        meta,
        body: {
          assignedAgentId: buf.getUint16(off, true),
          tickRateHz: buf.getUint16(off + 2, true),
          snapshotDiv: buf.getUint8(off + 4),
          scenarioHash: buf.getBigUint64(off + 5, true),
        },
      };
    }
    case MsgType.SNAPSHOT: {
      need(buf, off + 18);
      const tick = Number(buf.getBigUint64(off, true));
      const simTimeUs = Number(buf.getBigUint64(off + 8, true));
      const n = buf.getUint16(off + 16, true);
      need(buf, off + 18 + n * 38);
      const records: AgentRecord[] = [];
      for (let i = 0; i < n; i++) {
        const base = off + 18 + i * 38;
        records.push({
          agentId: buf.getUint32(base, true),
          kind: buf.getUint8(base + 4) as AgentKind,
          flags: buf.getUint8(base + 5),
          x: buf.getFloat64(base + 6, true),
          y: buf.getFloat64(base + 14, true),
          heading: buf.getFloat32(base + 22, true),
          speed: buf.getFloat32(base + 26, true),
          yawRate: buf.getFloat32(base + 30, true),
          aux: buf.getFloat32(base + 34, true),
        });
      }
      return {
        type: "snapshot",
        meta,
        body: { tick, simTimeUs, records, moreFragments: (meta.flags & 0x01) !== 0 },
      };
    }
    case MsgType.EVENT: {
      need(buf, off + 18);
      return {
        type: "event",
        meta,
        body: {
          code: buf.getUint16(off, true),
          subject: buf.getUint32(off + 2, true),
          object: buf.getUint32(off + 6, true),
          value: buf.getFloat64(off + 10, true),
        },
      };
    }
    case MsgType.PONG: {
      need(buf, off + 24);
      return {
        type: "pong",
        meta,
        body: {
          t0: Number(buf.getBigUint64(off, true)),
          t1: Number(buf.getBigUint64(off + 8, true)),
          t2: Number(buf.getBigUint64(off + 16, true)),
        },
      };
    }
    case MsgType.NBACK: {
      need(buf, off + 6);
      const nkind = buf.getUint8(off);
      if (nkind === NBACK_STIMULUS) {
        return { type: "nback_stim", meta, symbol: buf.getUint8(off + 1) };
      }
      return { type: "other", meta, msgType };
    }
    default:
      return { type: "other", meta, msgType };
  }
}

/** Event codes the client reacts to (mirror of the server enum). */
export enum EventCode {
  EHMI_CHANGE = 1,
  TAKEOVER_REQUEST = 2,
  TAKEOVER_ENGAGE = 3,
  SIGNAL_PHASE = 7,
  QRESPONSE = 8,
  NBACK_STIM = 9,
  QUESTIONNAIRE_START = 18,
  NBACK_START = 19,
}

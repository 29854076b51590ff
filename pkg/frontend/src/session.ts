/**
 * Client session: join handshake, input pump, clock sync, and event
 * routing. Pure of DOM concerns; the page wires callbacks.
 *
 * The client only ever sends HELLO, INPUT, PING, QRESPONSE, NBACK and
 * BYE; everything rendered comes from authoritative snapshots.
 */

import { ClockSync } from "./clock.js";
import { ControlMapper, KeyState, SequenceCounter } from "./input.js";
import { SnapshotBuffer } from "./interp.js";
import { NbackTask } from "./nback.js";
import { Instrument, PromptState } from "./prompts.js";
import {
  AgentKind,
  EventCode,
  decode,
  defaultMeta,
  encodeBye,
  encodeHello,
  encodeInput,
  encodeNbackResponse,
  encodePing,
  encodeQResponse,
  type EventMsg,
  type Meta,
  type ServerMessage,
  type Welcome,
} from "./protocol.js";

export interface SessionCallbacks {
  onWelcome?: (welcome: Welcome) => void;
  onEvent?: (event: EventMsg) => void;
  onNbackStimulus?: (symbol: number) => void;
  onTakeoverRequest?: () => void;
  onQuestionnaire?: (instrument: Instrument) => void;
}

export interface SessionOptions {
  role: AgentKind;
  displayName: string;
  sendRateHz?: number; // default 50
  interpolationDelayMs?: number; // default 100
  pingIntervalMs?: number; // default 1000
}

export const nowUs = (): number =>
  Math.round((globalThis.performance?.now() ?? Date.now()) * 1000);

export class ClientSession {
  readonly buffer: SnapshotBuffer;
  readonly clock = new ClockSync();
  readonly prompts = new PromptState();
  readonly seq = new SequenceCounter();
  readonly qseq = new SequenceCounter();
  readonly nbackSeq = new SequenceCounter();
  mapper: ControlMapper;
  agentId = 0;
  sessionId = 0;
  welcome: Welcome | null = null;
  nback: NbackTask | null = null;
  private sendTimer: ReturnType<typeof setInterval> | null = null;
  private pingTimer: ReturnType<typeof setInterval> | null = null;
  private lastSample = 0;

  constructor(
    private ws: WebSocket,
    private options: SessionOptions,
    private callbacks: SessionCallbacks = {},
    mapper?: ControlMapper,
  ) {
    this.buffer = new SnapshotBuffer(options.interpolationDelayMs ?? 100);
    this.mapper = mapper ?? new ControlMapper(options.role, new KeyState());
    ws.binaryType = "arraybuffer";
    ws.addEventListener("message", (ev) => {
      if (typeof ev.data === "string") return; // contract: binary only
      this.handle(decode(ev.data as ArrayBuffer));
    });
  }

  private meta(seq = 0, kind?: number): Meta {
    return {
      ...defaultMeta(),
      session: this.sessionId,
      agentId: this.agentId,
      seq,
      timestampUs: nowUs(),
      ...(kind !== undefined ? { kind } : {}),
    };
  }

  join(): void {
    this.ws.send(
      encodeHello(this.options.role, this.options.displayName, this.meta(1)),
    );
  }

  private handle(msg: ServerMessage): void {
    switch (msg.type) {
      case "welcome": {
        this.welcome = msg.body;
        this.agentId = msg.body.assignedAgentId;
        this.sessionId = msg.meta.session;
        this.startPumps();
        this.callbacks.onWelcome?.(msg.body);
        break;
      }
      case "snapshot":
        this.buffer.push(msg.body, performance.now());
        break;
      case "pong": {
        this.clock.add({
          t0: msg.body.t0,
          t1: msg.body.t1,
          t2: msg.body.t2,
          t3: nowUs(),
        });
        break;
      }
      case "event":
        this.routeEvent(msg.body);
        break;
      case "nback_stim":
        this.onNbackStim(msg.symbol);
        break;
      default:
        break;
    }
  }

  private routeEvent(event: EventMsg): void {
    switch (event.code) {
      case EventCode.QRESPONSE:
        if (event.subject === this.agentId) {
          this.prompts.acknowledge(event.object >> 8, event.object & 0xff, event.value);
        }
        break;
      case EventCode.TAKEOVER_REQUEST:
        if (event.subject === this.agentId) {
          this.prompts.takeoverPrompt = true;
          this.callbacks.onTakeoverRequest?.();
        }
        break;
      case EventCode.QUESTIONNAIRE_START:
        if (event.subject === 0 || event.subject === this.agentId) {
          const instrument = event.value as Instrument;
          this.prompts.openPanel(instrument);
          this.callbacks.onQuestionnaire?.(instrument);
        }
        break;
      case EventCode.NBACK_START:
        if (event.subject === 0 || event.subject === this.agentId) {
          // value carries n, object the run length
          this.nback = new NbackTask(event.value, event.object || null);
        }
        break;
      default:
        break;
    }
    this.callbacks.onEvent?.(event);
  }

  private onNbackStim(symbol: number): void {
    this.nback?.addStimulus(symbol, performance.now() / 1000);
    this.callbacks.onNbackStimulus?.(symbol);
  }

  /** Spacebar (or tap) during an n-back run. */
  nbackRespond(): void {
    if (!this.nback || this.nback.stimuli.length === 0) return;
    const t = performance.now() / 1000;
    this.nback.respond(t);
    const last = this.nback.stimuli[this.nback.stimuli.length - 1];
    const rtHint = t - last.t;
    this.ws.send(
      encodeNbackResponse(last.symbol, rtHint, this.meta(this.nbackSeq.next())),
    );
  }

  submitOpenInstrument(): void {
    for (const entry of this.prompts.submit(() => this.qseq.next())) {
      this.ws.send(
        encodeQResponse(entry.instrument, entry.item, entry.value, this.meta(entry.seq)),
      );
    }
  }

  private startPumps(): void {
    const intervalMs = 1000 / (this.options.sendRateHz ?? 50);
    this.lastSample = performance.now();
    this.sendTimer = setInterval(() => {
      const now = performance.now();
      const dt = (now - this.lastSample) / 1000;
      this.lastSample = now;
      this.mapper.paused = this.prompts.inputPaused;
      const control = this.mapper.sample(dt);
      this.ws.send(
        encodeInput(control, this.buffer.latest?.tick ?? 0,
          this.meta(this.seq.next())),
      );
    }, intervalMs);
    this.pingTimer = setInterval(() => {
      this.ws.send(encodePing(nowUs(), this.meta()));
    }, this.options.pingIntervalMs ?? 1000);
    this.ws.send(encodePing(nowUs(), this.meta()));
  }

  leave(): void {
    if (this.sendTimer) clearInterval(this.sendTimer);
    if (this.pingTimer) clearInterval(this.pingTimer);
    try {
      this.ws.send(encodeBye(this.meta(this.seq.next())));
    } catch {
      // socket already gone
    }
  }
}

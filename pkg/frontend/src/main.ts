/**
 * Page entry: join form, canvas loop, instrument panels, n-back and
 * takeover overlays. Network and rendering are decoupled through the
 * session's snapshot ring buffer.
 */

import { ControlMapper, KeyState } from "./input.js";
import { loadLocale, type Locale } from "./locale.js";
import { Instrument, INSTRUMENT_ITEM_COUNT } from "./prompts.js";
import { AgentKind, EventCode } from "./protocol.js";
import { SceneView, hudTtc, type SceneMap } from "./scene.js";
import { ClientSession } from "./session.js";

const $ = <T extends HTMLElement>(id: string): T =>
  document.getElementById(id) as T;

// the served scenario's geometry for the background; the fig-6 crossing
// by default, replaceable via ?map=<url> pointing at a scenario JSON
const FALLBACK_MAP: SceneMap = {
  lanes: [
    { width: 3.5, points: [[-110, 0], [20, 0]] },
    { width: 2.0, points: [[0, -60], [0, 20]] },
  ],
  crosswalks: [{ polygon: [[-2, -6], [2, -6], [2, 6], [-2, 6]] }],
  conflictPoints: [[0, 0]],
};

async function loadMap(): Promise<SceneMap> {
  const url = new URLSearchParams(location.search).get("map");
  if (!url) return FALLBACK_MAP;
  try {
    const doc = await (await fetch(url)).json();
    return {
      lanes: (doc.map.lanes ?? []).map((l: { width?: number; points: [number, number][] }) => ({
        width: l.width ?? 3.5,
        points: l.points,
      })),
      crosswalks: (doc.map.crosswalks ?? []).map(
        (c: { polygon: [number, number][] }) => ({ polygon: c.polygon }),
      ),
      conflictPoints: Object.values(doc.map.conflict_points ?? {}) as [number, number][],
    };
  } catch {
    return FALLBACK_MAP;
  }
}

function roleFromSelect(value: string): AgentKind {
  switch (value) {
    case "driver": return AgentKind.Driver;
    case "av": return AgentKind.AutomatedVehicle;
    case "cyclist": return AgentKind.Cyclist;
    case "transit_user": return AgentKind.TransitUser;
    default: return AgentKind.Pedestrian;
  }
}

let locale: Locale;

function renderPanel(session: ClientSession, instrument: Instrument): void {
  const panel = $("panel");
  panel.innerHTML = "";
  panel.classList.remove("hidden");
  const title = document.createElement("h2");
  const body = document.createElement("div");
  body.className = "panel-body";
  const submit = document.createElement("button");
  submit.textContent = locale.submit;
  submit.disabled = true;

  const refresh = () => {
    submit.disabled = !session.prompts.complete;
  };

  const slider = (item: number, label: string, lo: string, hi: string,
                  min: number, max: number, step: number) => {
    const row = document.createElement("label");
    row.className = "scale-row";
    row.innerHTML = `<span>${label}</span><small>${lo}</small>`;
    const input = document.createElement("input");
    input.type = "range";
    input.min = String(min);
    input.max = String(max);
    input.step = String(step);
    input.value = String((min + max) / 2);
    input.addEventListener("input", () => {
      session.prompts.setAnswer(instrument, item, Number(input.value));
      refresh();
    });
    // moving the slider once counts as answering; a click without drag
    // must still register the midpoint
    input.addEventListener("change", () => {
      session.prompts.setAnswer(instrument, item, Number(input.value));
      refresh();
    });
    row.appendChild(input);
    const hiLabel = document.createElement("small");
    hiLabel.textContent = hi;
    row.appendChild(hiLabel);
    return row;
  };

  if (instrument === Instrument.TLX) {
    title.textContent = locale.tlx.title;
    locale.tlx.scales.forEach((scale, i) => {
      body.appendChild(slider(i, scale.name, scale.low, scale.high, 0, 100, 1));
    });
  } else if (instrument === Instrument.PANAS) {
    title.textContent = locale.panas.title;
    locale.panas.items.forEach((item, i) => {
      const row = document.createElement("div");
      row.className = "panas-row";
      row.innerHTML = `<span>${item}</span>`;
      locale.panas.anchors.forEach((anchor, k) => {
        const btn = document.createElement("button");
        btn.textContent = String(k + 1);
        btn.title = anchor;
        btn.addEventListener("click", () => {
          session.prompts.setAnswer(instrument, i, k + 1);
          row.querySelectorAll("button").forEach((b) => b.classList.remove("picked"));
          btn.classList.add("picked");
          refresh();
        });
        row.appendChild(btn);
      });
      body.appendChild(row);
    });
  } else if (instrument === Instrument.VA) {
    title.textContent = locale.va.title;
    body.appendChild(slider(0, locale.va.valence, "-1", "+1", -1, 1, 0.05));
    body.appendChild(slider(1, locale.va.arousal, "-1", "+1", -1, 1, 0.05));
  } else if (instrument === Instrument.STRESS) {
    title.textContent = locale.stress.title;
    body.appendChild(slider(0, locale.stress.prompt, "0", "10", 0, 10, 1));
  } else {
    title.textContent = locale.timeperc.title;
    const row = document.createElement("label");
    row.textContent = locale.timeperc.prompt;
    const input = document.createElement("input");
    input.type = "number";
    input.min = "1";
    input.addEventListener("input", () => {
      const v = Number(input.value);
      if (v > 0) {
        session.prompts.setAnswer(instrument, 0, v);
        refresh();
      }
    });
    row.appendChild(input);
    body.appendChild(row);
  }

  submit.addEventListener("click", () => {
    session.submitOpenInstrument();
    panel.classList.add("hidden");
  });
  panel.append(title, body, submit);
}

function flashNbackLetter(symbol: number): void {
  const el = $("nback-letter");
  el.textContent = String.fromCharCode(symbol);
  el.classList.remove("hidden");
  el.classList.remove("flash");
  void el.offsetWidth; // restart the animation
  el.classList.add("flash");
}

async function start(): Promise<void> {
  locale = await loadLocale();
  const sceneMap = await loadMap();
  const canvas = $("view") as unknown as HTMLCanvasElement;
  const scene = new SceneView(canvas, sceneMap);
  const status = $("status");
  const form = $("join-form");

  $("join").addEventListener("click", () => {
    const role = roleFromSelect(($("role") as HTMLSelectElement).value);
    const name = ($("name") as HTMLInputElement).value || "anonymous";
    const endpoint = ($("endpoint") as HTMLInputElement).value
      || `ws://${location.hostname}:47811`;

    const keys = new KeyState();
    const mapper = new ControlMapper(role, keys);
    const ws = new WebSocket(endpoint);
    const session = new ClientSession(ws, { role, displayName: name }, {
      onWelcome: (welcome) => {
        form.classList.add("hidden");
        scene.followAgent = welcome.assignedAgentId;
        status.textContent =
          `agent ${welcome.assignedAgentId} @ ${welcome.tickRateHz} Hz`;
      },
      onQuestionnaire: (instrument) => renderPanel(session, instrument),
      onNbackStimulus: flashNbackLetter,
      onTakeoverRequest: () => $("takeover").classList.remove("hidden"),
      onEvent: (event) => {
        if (event.code === EventCode.SIGNAL_PHASE) {
          scene.signalPhase = event.value > 0 ? "green" : "red";
        }
      },
    }, mapper);

    ws.addEventListener("open", () => session.join());
    ws.addEventListener("close", () => {
      status.textContent = "disconnected";
      form.classList.remove("hidden");
    });
    window.addEventListener("beforeunload", () => session.leave());

    window.addEventListener("keydown", (ev) => {
      if (ev.code === "Space" && session.nback && !session.nback.complete) {
        session.nbackRespond();
        ev.preventDefault();
        return;
      }
      if (session.prompts.inputPaused) return;
      keys.press(ev.code);
      if (ev.code === "KeyR") mapper.toggleReverse();
      if (ev.code === "KeyQ") mapper.cycleAssist();
      if (ev.code === "KeyE") mapper.toggleSeat();
      // any super-threshold control clears the takeover prompt; the
      // authoritative transfer is decided by the server
      if (["ArrowUp", "ArrowDown", "ArrowLeft", "ArrowRight", "KeyW",
           "KeyA", "KeyS", "KeyD", "Space"].includes(ev.code)) {
        $("takeover").classList.add("hidden");
        session.prompts.takeoverPrompt = false;
      }
    });
    window.addEventListener("keyup", (ev) => keys.release(ev.code));

    const conflict = sceneMap.conflictPoints[0] ?? [0, 0];
    const draw = () => {
      const world = session.buffer.sample(performance.now());
      const hud: string[] = [];
      if (world) {
        const me = world.agents.find((a) => a.agentId === session.agentId);
        if (me) {
          hud.push(`speed ${(me.speed * 3.6).toFixed(1)} km/h`);
          const ttc = hudTtc(world, session.agentId, conflict);
          hud.push(`TTC ${ttc === null ? "--" : ttc.toFixed(1) + " s"}`);
        }
        if (session.clock.ready) {
          const { offsetUs, delayUs } = session.clock.estimate();
          hud.push(`clock ${(offsetUs / 1000).toFixed(1)} ms ` +
                   `(rtt ${(delayUs / 1000).toFixed(1)} ms)`);
        }
      }
      scene.render(world, hud);
      requestAnimationFrame(draw);
    };
    requestAnimationFrame(draw);
  });
}

start().catch((err) => {
  document.body.textContent = `failed to start: ${err}`;
});

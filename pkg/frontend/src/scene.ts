/**
 * Top-down 2D canvas view of the authoritative world.
 *
 * World frame: +x east, +y north; the canvas y axis is flipped so north
 * points up. Renders lanes, crosswalks, conflict points, agents with
 * heading glyphs, an eHMI halo around automated vehicles, signal heads,
 * and a telemetry HUD.
 */

import type { RenderWorld } from "./interp.js";
import {
  AgentKind,
  FLAG_EHMI_LIGHT_SHIFT,
  FLAG_EHMI_PROJECTION,
  FLAG_YIELDING,
} from "./protocol.js";

export interface SceneMap {
  lanes: { width: number; points: [number, number][] }[];
  crosswalks: { polygon: [number, number][] }[];
  conflictPoints: [number, number][];
}

const AGENT_STYLE: Record<AgentKind, { color: string; length: number; width: number }> = {
  [AgentKind.Driver]: { color: "#4d9de0", length: 4.5, width: 1.8 },
  [AgentKind.AutomatedVehicle]: { color: "#e07a4d", length: 4.5, width: 1.8 },
  [AgentKind.Cyclist]: { color: "#3bb273", length: 1.8, width: 0.6 },
  [AgentKind.Pedestrian]: { color: "#e8c547", length: 0.6, width: 0.6 },
  [AgentKind.TransitUser]: { color: "#b98ae0", length: 0.6, width: 0.6 },
};

const LIGHT_BAND_COLORS = ["transparent", "#20c0ff", "#30e060"]; // off/aware/yielding

export class SceneView {
  scale = 4; // px per meter
  centerX = 0;
  centerY = 0;
  followAgent: number | null = null;
  signalPhase: string | null = null;

  constructor(
    private canvas: HTMLCanvasElement,
    private map: SceneMap,
  ) {}

  private toCanvas(x: number, y: number): [number, number] {
    return [
      this.canvas.width / 2 + (x - this.centerX) * this.scale,
      this.canvas.height / 2 - (y - this.centerY) * this.scale,
    ];
  }

  render(world: RenderWorld | null, hud: string[]): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.fillStyle = "#1b2026";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);

    if (world && this.followAgent !== null) {
      const me = world.agents.find((a) => a.agentId === this.followAgent);
      if (me) {
        this.centerX = me.x;
        this.centerY = me.y;
      }
    }

    for (const lane of this.map.lanes) {
      ctx.strokeStyle = "#3a4450";
      ctx.lineWidth = lane.width * this.scale;
      ctx.lineCap = "round";
      ctx.beginPath();
      lane.points.forEach(([x, y], i) => {
        const [cx, cy] = this.toCanvas(x, y);
        if (i === 0) ctx.moveTo(cx, cy);
        else ctx.lineTo(cx, cy);
      });
      ctx.stroke();
      ctx.strokeStyle = "#566270";
      ctx.lineWidth = 1;
      ctx.setLineDash([8, 8]);
      ctx.beginPath();
      lane.points.forEach(([x, y], i) => {
        const [cx, cy] = this.toCanvas(x, y);
        if (i === 0) ctx.moveTo(cx, cy);
        else ctx.lineTo(cx, cy);
      });
      ctx.stroke();
      ctx.setLineDash([]);
    }

    for (const cw of this.map.crosswalks) {
      ctx.fillStyle = "rgba(220, 220, 220, 0.25)";
      ctx.beginPath();
      cw.polygon.forEach(([x, y], i) => {
        const [cx, cy] = this.toCanvas(x, y);
        if (i === 0) ctx.moveTo(cx, cy);
        else ctx.lineTo(cx, cy);
      });
      ctx.closePath();
      ctx.fill();
    }

    for (const [x, y] of this.map.conflictPoints) {
      const [cx, cy] = this.toCanvas(x, y);
      ctx.strokeStyle = "#d05050";
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      ctx.arc(cx, cy, 3 * this.scale, 0, 2 * Math.PI);
      ctx.stroke();
      if (this.signalPhase) {
        ctx.fillStyle = this.signalPhase === "green" ? "#30e060" : "#e03030";
        ctx.beginPath();
        ctx.arc(cx + 14, cy - 14, 5, 0, 2 * Math.PI);
        ctx.fill();
      }
    }

    if (world) {
      for (const agent of world.agents) {
        const style = AGENT_STYLE[agent.kind] ?? AGENT_STYLE[AgentKind.Driver];
        const [cx, cy] = this.toCanvas(agent.x, agent.y);

        if (agent.kind === AgentKind.AutomatedVehicle) {
          const band = (agent.flags >> FLAG_EHMI_LIGHT_SHIFT) & 0x3;
          const halo = LIGHT_BAND_COLORS[band] ?? "transparent";
          if (halo !== "transparent") {
            ctx.strokeStyle = halo;
            ctx.lineWidth = 3;
            ctx.beginPath();
            ctx.arc(cx, cy, 4 * this.scale, 0, 2 * Math.PI);
            ctx.stroke();
          }
          if (agent.flags & FLAG_EHMI_PROJECTION) {
            ctx.fillStyle = "rgba(48, 224, 96, 0.15)";
            ctx.beginPath();
            ctx.arc(cx, cy, 6 * this.scale, 0, 2 * Math.PI);
            ctx.fill();
          }
        }

        ctx.save();
        ctx.translate(cx, cy);
        ctx.rotate(-agent.heading);
        ctx.fillStyle = agent.stale ? "#777" : style.color;
        const L = style.length * this.scale;
        const W = style.width * this.scale;
        ctx.fillRect(-L / 2, -W / 2, L, W);
        // heading glyph
        ctx.fillStyle = "#10131a";
        ctx.beginPath();
        ctx.moveTo(L / 2, 0);
        ctx.lineTo(L / 5, -W / 2);
        ctx.lineTo(L / 5, W / 2);
        ctx.closePath();
        ctx.fill();
        ctx.restore();

        if (agent.flags & FLAG_YIELDING) {
          ctx.fillStyle = "#30e060";
          ctx.font = "10px sans-serif";
          ctx.fillText("yield", cx + 8, cy - 8);
        }
      }
    }

    ctx.fillStyle = "#dde4ec";
    ctx.font = "13px monospace";
    hud.forEach((line, i) => ctx.fillText(line, 12, 20 + i * 17));
    if (world?.stale) {
      ctx.fillStyle = "#e05050";
      ctx.fillText("STALE - no snapshots", 12, this.canvas.height - 14);
    }
  }
}

/** TTC of me vs the nearest conflicting agent for the HUD. */
export function hudTtc(
  world: RenderWorld,
  myId: number,
  conflict: [number, number],
): number | null {
  const me = world.agents.find((a) => a.agentId === myId);
  if (!me || me.speed < 0.05) return null;
  const dist = Math.hypot(me.x - conflict[0], me.y - conflict[1]);
  const myTta = dist / me.speed;
  let best: number | null = null;
  for (const other of world.agents) {
    if (other.agentId === myId || other.speed < 0.05) continue;
    const d = Math.hypot(other.x - conflict[0], other.y - conflict[1]);
    const tta = d / other.speed;
    if (Math.abs(tta - myTta) < 4.0) {
      const onset = Math.max(tta, myTta);
      if (best === null || onset < best) best = onset;
    }
  }
  return best;
}

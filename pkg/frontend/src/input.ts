/**
 * Keyboard-to-control mapping per agent role, sampled at the send rate.
 *
 * Driver: arrows/WASD steer and accelerate, space brakes, R toggles
 * reverse. Cyclist: number keys hold power presets {0, 75, 150, 250 W},
 * A cycles assist, arrows steer, space brakes. Pedestrian/transit:
 * WASD walk vector, shift jogs, E requests a seat.
 *
 * While a questionnaire panel is open, capture is paused and a neutral
 * control is emitted (speed commands decay to zero server-side).
 */

import { AgentKind, type Control } from "./protocol.js";

export const CYCLIST_POWER_PRESETS = [0, 75, 150, 250];

const DRIVER_MAX_STEER = 7.5; // rad at the wheel rim
const STEER_RATE = 6.0; // rad/s toward full lock
const STEER_RETURN = 8.0; // rad/s recentering

export class KeyState {
  private down = new Set<string>();

  press(code: string): void {
    this.down.add(code);
  }

  release(code: string): void {
    this.down.delete(code);
  }

  has(code: string): boolean {
    return this.down.has(code);
  }

  clear(): void {
    this.down.clear();
  }
}

export class ControlMapper {
  paused = false;
  private steer = 0;
  private reverse = false;
  private assistLevel = 0;
  private seatRequested = false;

  constructor(public role: AgentKind, private keys: KeyState) {}

  toggleReverse(): void {
    this.reverse = !this.reverse;
  }

  cycleAssist(): void {
    this.assistLevel = (this.assistLevel + 1) % 4;
  }

  toggleSeat(): void {
    this.seatRequested = !this.seatRequested;
  }

  get assist(): number {
    return this.assistLevel;
  }

  get seated(): boolean {
    return this.seatRequested;
  }

  /** One control sample; dt is the interval since the previous one. */
  sample(dt: number): Control {
    if (this.paused) return this.neutral();
    switch (this.role) {
      case AgentKind.Driver:
      case AgentKind.AutomatedVehicle:
        return this.driver(dt);
      case AgentKind.Cyclist:
        return this.cyclist(dt);
      default:
        return this.pedestrian();
    }
  }

  neutral(): Control {
    switch (this.role) {
      case AgentKind.Driver:
      case AgentKind.AutomatedVehicle:
        return { kind: "driver", steerWheel: this.steer, throttle: 0, brake: 0, gear: 1 };
      case AgentKind.Cyclist:
        return {
          kind: "cyclist",
          power: 0,
          cadence: 0,
          steer: 0,
          brake: 0,
          assistLevel: this.assistLevel,
        };
      default:
        return {
          kind: "pedestrian",
          walkSpeed: 0,
          walkHeading: 0,
          seatedRequest: this.seatRequested,
        };
    }
  }

  private steerAxis(dt: number, max: number): number {
    const left = this.keys.has("ArrowLeft") || this.keys.has("KeyA");
    const right = this.keys.has("ArrowRight") || this.keys.has("KeyD");
    if (left === right) {
      // recenter
      const back = STEER_RETURN * dt * (max / DRIVER_MAX_STEER + 1);
      if (Math.abs(this.steer) <= back) this.steer = 0;
      else this.steer -= Math.sign(this.steer) * back;
    } else {
      const dir = left ? 1 : -1; // +steer turns left (heading increases)
      this.steer += dir * STEER_RATE * dt;
      this.steer = Math.max(-max, Math.min(max, this.steer));
    }
    return this.steer;
  }

  private driver(dt: number): Control {
    const steerWheel = this.steerAxis(dt, DRIVER_MAX_STEER);
    const throttle = this.keys.has("ArrowUp") || this.keys.has("KeyW") ? 1 : 0;
    const brake = this.keys.has("Space") || this.keys.has("ArrowDown") ? 1 : 0;
    return {
      kind: "driver",
      steerWheel,
      throttle,
      brake,
      gear: this.reverse ? -1 : 1,
    };
  }

  private cyclist(dt: number): Control {
    let power = 0;
    if (this.keys.has("Digit1")) power = CYCLIST_POWER_PRESETS[1];
    if (this.keys.has("Digit2")) power = CYCLIST_POWER_PRESETS[2];
    if (this.keys.has("Digit3")) power = CYCLIST_POWER_PRESETS[3];
    if (this.keys.has("ArrowUp") || this.keys.has("KeyW")) {
      power = Math.max(power, CYCLIST_POWER_PRESETS[2]);
    }
    const cadence = power > 0 ? 80 : 0;
    return {
      kind: "cyclist",
      power,
      cadence,
      steer: this.steerAxis(dt, 0.5),
      brake: this.keys.has("Space") ? 1 : 0,
      assistLevel: this.assistLevel,
    };
  }

  private pedestrian(): Control {
    let dx = 0;
    let dy = 0;
    if (this.keys.has("KeyW") || this.keys.has("ArrowUp")) dy += 1;
    if (this.keys.has("KeyS") || this.keys.has("ArrowDown")) dy -= 1;
    if (this.keys.has("KeyA") || this.keys.has("ArrowLeft")) dx -= 1;
    if (this.keys.has("KeyD") || this.keys.has("ArrowRight")) dx += 1;
    const moving = dx !== 0 || dy !== 0;
    const jog = this.keys.has("ShiftLeft") || this.keys.has("ShiftRight");
    return {
      kind: "pedestrian",
      walkSpeed: moving ? (jog ? 2.5 : 1.5) : 0,
      walkHeading: moving ? Math.atan2(dy, dx) : 0,
      seatedRequest: this.seatRequested,
    };
  }
}

/** Monotonic per-session input sequence numbers. */
export class SequenceCounter {
  private value = 0;

  next(): number {
    this.value += 1;
    return this.value;
  }

  get current(): number {
    return this.value;
  }
}

"""Pure-Python reference kernels.

These mirror the compiled versions in ``_kernels.pyx`` operation for
operation: both run identical IEEE-754 double sequences, so results are
bitwise-equal regardless of which implementation is loaded.  Keep the
two files in lockstep when editing.
"""

from __future__ import annotations

import math

TWO_PI = 6.283185307179586
PI = 3.141592653589793
GRAVITY = 9.81


def _norm_angle(t: float) -> float:
    t = math.fmod(t, TWO_PI)
    if t <= -PI:
        t += TWO_PI
    elif t > PI:
        t -= TWO_PI
    return t


def project_point(xs, ys, cum, px: float, py: float):
    """Nearest point on a polyline.

    Returns (arc_length, signed_lateral, distance); lateral is positive
    left of the travel direction.  Ties between equidistant segments
    resolve to the smallest arc length (strict-improvement scan).
    """
    n = len(xs)
    best_d2 = math.inf
    best_s = 0.0
    best_cross = 0.0
    for i in range(n - 1):
        x0 = xs[i]
        y0 = ys[i]
        dx = xs[i + 1] - x0
        dy = ys[i + 1] - y0
        seg2 = dx * dx + dy * dy
        t = ((px - x0) * dx + (py - y0) * dy) / seg2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        ex = px - (x0 + t * dx)
        ey = py - (y0 + t * dy)
        d2 = ex * ex + ey * ey
        if d2 < best_d2:
            best_d2 = d2
            best_s = cum[i] + t * (cum[i + 1] - cum[i])
            best_cross = dx * ey - dy * ex
    dist = math.sqrt(best_d2)
    if dist == 0.0:
        lat = 0.0
    else:
        lat = math.copysign(dist, best_cross)
    return best_s, lat, dist


def step_vehicle(x: float, y: float, heading: float, v: float,
                 steer_wheel: float, throttle: float, brake: float,
                 gear_sign: float, wheelbase: float, steer_ratio: float,
                 max_road_wheel: float, a_max: float, b_max: float,
                 c_d: float, v_max: float, grade: float, dt: float):
    """One explicit-Euler step of the kinematic bicycle model.

    Returns (x, y, heading, v, accel, yaw_rate).  Braking and drag are
    dissipative: the speed saturates at zero instead of flipping sign
    within a step.
    """
    delta = steer_wheel / steer_ratio
    if delta > max_road_wheel:
        delta = max_road_wheel
    elif delta < -max_road_wheel:
        delta = -max_road_wheel

    if v > 0.0:
        sv = 1.0
    elif v < 0.0:
        sv = -1.0
    else:
        sv = 0.0
    accel = (gear_sign * throttle * a_max - sv * brake * b_max
             - c_d * v - GRAVITY * grade)
    v_new = v + accel * dt
    if v * v_new < 0.0:
        v_new = 0.0
    if v_new > v_max:
        v_new = v_max
    elif v_new < -v_max:
        v_new = -v_max

    yaw_rate = v * math.tan(delta) / wheelbase
    nx = x + v * math.cos(heading) * dt
    ny = y + v * math.sin(heading) * dt
    nh = _norm_angle(heading + yaw_rate * dt)
    return nx, ny, nh, v_new, accel, yaw_rate


def step_cyclist(x: float, y: float, heading: float, v: float,
                 power: float, steer: float, brake: float,
                 assist_factor: float, mass: float, crr: float, cda: float,
                 rho: float, eta: float, g: float, wheelbase: float,
                 max_steer: float, f_brake_max: float, v_max: float,
                 grade: float, dt: float):
    """One explicit-Euler step of the power-balance cycling model.

    ``assist_factor`` is the pre-computed motor multiplier (0 when off or
    above cutoff).  The propulsion term uses a 0.5 m/s floor to avoid the
    P/v singularity at rest; the bike never rolls backwards.
    """
    theta = math.atan(grade)
    p_total = power * (1.0 + assist_factor)
    vf = v if v > 0.5 else 0.5
    force = (eta * p_total / vf
             - crr * mass * g * math.cos(theta)
             - mass * g * math.sin(theta)
             - 0.5 * rho * cda * v * v
             - brake * f_brake_max)
    accel = force / mass
    v_new = v + accel * dt
    if v_new < 0.0:
        v_new = 0.0
    elif v_new > v_max:
        v_new = v_max

    delta = steer
    if delta > max_steer:
        delta = max_steer
    elif delta < -max_steer:
        delta = -max_steer
    yaw_rate = v * math.tan(delta) / wheelbase
    nx = x + v * math.cos(heading) * dt
    ny = y + v * math.sin(heading) * dt
    nh = _norm_angle(heading + yaw_rate * dt)
    return nx, ny, nh, v_new, accel, yaw_rate


def step_pedestrian(x: float, y: float, heading: float, v: float,
                    walk_speed: float, walk_heading: float,
                    tau: float, max_turn_rate: float, v_max: float,
                    dt: float):
    """First-order walking-speed response with slew-limited heading.

    Returns (x, y, heading, v, accel, yaw_rate).
    """
    target = walk_speed if walk_speed < v_max else v_max
    alpha = dt / tau
    if alpha > 1.0:
        alpha = 1.0
    v_new = v + (target - v) * alpha

    diff = _norm_angle(walk_heading - heading)
    max_step = max_turn_rate * dt
    if diff > max_step:
        diff = max_step
    elif diff < -max_step:
        diff = -max_step
    yaw_rate = diff / dt

    nx = x + v * math.cos(heading) * dt
    ny = y + v * math.sin(heading) * dt
    nh = _norm_angle(heading + diff)
    accel = (v_new - v) / dt
    return nx, ny, nh, v_new, accel, yaw_rate

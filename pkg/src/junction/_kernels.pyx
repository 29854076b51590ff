# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.

Mirrors _kernels_py.py operation for operation; both implementations
must stay bitwise-equivalent (same IEEE-754 double sequences, same libm
calls).  Edit the two files together.
"""

from libc.math cimport atan, atan2, copysign, cos, fmod, sin, sqrt, tan

cdef double TWO_PI = 6.283185307179586
cdef double PI = 3.141592653589793
cdef double GRAVITY = 9.81
cdef double INF = float("inf")


cdef inline double _norm_angle(double t) nogil:
    t = fmod(t, TWO_PI)
    if t <= -PI:
        t += TWO_PI
    elif t > PI:
        t -= TWO_PI
    return t


def project_point(double[:] xs, double[:] ys, double[:] cum,
                  double px, double py):
    """Nearest point on a polyline; see the pure-Python twin for docs."""
    cdef Py_ssize_t n = xs.shape[0]
    cdef double best_d2 = INF
    cdef double best_s = 0.0
    cdef double best_cross = 0.0
    cdef double x0, y0, dx, dy, seg2, t, ex, ey, d2, dist, lat
    cdef Py_ssize_t i
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
    dist = sqrt(best_d2)
    if dist == 0.0:
        lat = 0.0
    else:
        lat = copysign(dist, best_cross)
    return best_s, lat, dist


def step_vehicle(double x, double y, double heading, double v,
                 double steer_wheel, double throttle, double brake,
                 double gear_sign, double wheelbase, double steer_ratio,
                 double max_road_wheel, double a_max, double b_max,
                 double c_d, double v_max, double grade, double dt):
    cdef double delta = steer_wheel / steer_ratio
    cdef double sv, accel, v_new, yaw_rate, nx, ny, nh
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

    yaw_rate = v * tan(delta) / wheelbase
    nx = x + v * cos(heading) * dt
    ny = y + v * sin(heading) * dt
    nh = _norm_angle(heading + yaw_rate * dt)
    return nx, ny, nh, v_new, accel, yaw_rate


def step_cyclist(double x, double y, double heading, double v,
                 double power, double steer, double brake,
                 double assist_factor, double mass, double crr, double cda,
                 double rho, double eta, double g, double wheelbase,
                 double max_steer, double f_brake_max, double v_max,
                 double grade, double dt):
    cdef double theta = atan(grade)
    cdef double p_total = power * (1.0 + assist_factor)
    cdef double vf = v if v > 0.5 else 0.5
    cdef double force, accel, v_new, delta, yaw_rate, nx, ny, nh
    force = (eta * p_total / vf
             - crr * mass * g * cos(theta)
             - mass * g * sin(theta)
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
    yaw_rate = v * tan(delta) / wheelbase
    nx = x + v * cos(heading) * dt
    ny = y + v * sin(heading) * dt
    nh = _norm_angle(heading + yaw_rate * dt)
    return nx, ny, nh, v_new, accel, yaw_rate


def step_pedestrian(double x, double y, double heading, double v,
                    double walk_speed, double walk_heading,
                    double tau, double max_turn_rate, double v_max,
                    double dt):
    cdef double target = walk_speed if walk_speed < v_max else v_max
    cdef double alpha = dt / tau
    cdef double v_new, diff, max_step, yaw_rate, nx, ny, nh, accel
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

    nx = x + v * cos(heading) * dt
    ny = y + v * sin(heading) * dt
    nh = _norm_angle(heading + diff)
    accel = (v_new - v) / dt
    return nx, ny, nh, v_new, accel, yaw_rate

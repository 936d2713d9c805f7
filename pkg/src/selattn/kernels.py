"""Compiled trial simulation.

Hot loop of the whole package: every fitness evaluation runs here. Positions
are kept relative to the world centre so that mirroring a trial negates
coordinates exactly, and network input is summed over mirror pairs (see
:func:`selattn.ctrnn.pair_order`); together these make a run on a mirrored
trial the exact reflection of the original.

The numpy twin of this module is :mod:`selattn.kernels_np`.
"""
import math

import numpy as np

from ._jit import njit

# trace columns: t, agent_x, (x, y, alive) per object, sensors..., motor_left, motor_right
TRACE_FIXED_COLS = 8


@njit(cache=True, nogil=True)
def ray_hit(fx, fy, dx, dy, radius, max_range):
    """Distance along a unit ray to a circle, or -1.0 when there is no hit.

    ``(fx, fy)`` is the circle centre relative to the ray origin.
    """
    b = fx * dx + fy * dy
    c = fx * fx + fy * fy - radius * radius
    disc = b * b - c
    if disc < 0.0:
        return -1.0
    sq = math.sqrt(disc)
    s = b - sq
    if s < 0.0:
        s = b + sq
        if s < 0.0:
            return -1.0
    if s > max_range:
        return -1.0
    return s


@njit(cache=True, nogil=True)
def _sense(u, ox, oy, alive, ray_dx, ray_dy, radius, max_range, act):
    n_rays = ray_dx.shape[0]
    for r in range(n_rays):
        best = -1.0
        for k in range(ox.shape[0]):
            if not alive[k]:
                continue
            s = ray_hit(ox[k] - u, oy[k], ray_dx[r], ray_dy[r], radius, max_range)
            if s >= 0.0 and (best < 0.0 or s < best):
                best = s
        if best >= 0.0:
            act[r] = (max_range - best) / max_range
        else:
            act[r] = 0.0


@njit(cache=True, nogil=True)
def _sigma(x):
    if x > 500.0:
        x = 500.0
    elif x < -500.0:
        x = -500.0
    return 1.0 / (1.0 + math.exp(-x))


@njit(cache=True, nogil=True)
def simulate_one(W, gains, biases, taus, pa, pb, n_sensors, motor_l, motor_r,
                 trial, dt, max_speed, half_travel, radius, max_range,
                 ray_dx, ray_dy, max_steps, trace, record, offsets):
    """Run one trial; fills ``offsets`` and returns ``(steps, ok)``."""
    n = gains.shape[0]
    n_pairs = pa.shape[0]
    y = np.zeros(n)
    ynew = np.zeros(n)
    o = np.zeros(n)
    act = np.zeros(ray_dx.shape[0])
    ox = np.empty(2)
    oy = np.empty(2)
    vx = np.empty(2)
    vy = np.empty(2)
    alive = np.ones(2, dtype=np.bool_)
    for k in range(2):
        ox[k] = trial[4 * k] - 200.0
        oy[k] = trial[4 * k + 1]
        vx[k] = trial[4 * k + 2]
        vy[k] = trial[4 * k + 3]
        offsets[k] = math.inf
    u = 0.0
    t = 0.0
    landed = 0
    steps = 0
    while landed < 2 and steps < max_steps:
        _sense(u, ox, oy, alive, ray_dx, ray_dy, radius, max_range, act)
        for j in range(n):
            o[j] = _sigma(gains[j] * (y[j] + biases[j]))
        finite = True
        for i in range(n):
            acc = 0.0
            for p in range(n_pairs):
                a = pa[p]
                b = pb[p]
                if b >= 0:
                    acc += W[a, i] * o[a] + W[b, i] * o[b]
                else:
                    acc += W[a, i] * o[a]
            if i < n_sensors:
                acc += act[i]
            v = y[i] + (dt / taus[i]) * (-y[i] + acc)
            if not (abs(v) < 1e300):
                finite = False
            ynew[i] = v
        for i in range(n):
            y[i] = ynew[i]
        t += dt
        steps += 1
        if not finite:
            return steps, False
        out_l = _sigma(gains[motor_l] * (y[motor_l] + biases[motor_l]))
        out_r = _sigma(gains[motor_r] * (y[motor_r] + biases[motor_r]))
        vel = max_speed * (out_r - out_l)
        u_old = u
        u = u + vel * dt
        if u > half_travel:
            u = half_travel
        elif u < -half_travel:
            u = -half_travel
        for k in range(2):
            if not alive[k]:
                continue
            fall = vy[k] * dt
            y_next = oy[k] - fall
            if y_next <= 0.0:
                frac = oy[k] / fall
                xc = ox[k] + vx[k] * dt * frac
                ac = u_old + (u - u_old) * frac
                offsets[k] = abs(ac - xc)
                ox[k] = xc
                oy[k] = 0.0
                alive[k] = False
                landed += 1
            else:
                ox[k] = ox[k] + vx[k] * dt
                oy[k] = y_next
        if record:
            row = trace[steps - 1]
            row[0] = t
            row[1] = u + 200.0
            for k in range(2):
                row[2 + 3 * k] = ox[k] + 200.0
                row[3 + 3 * k] = oy[k]
                row[4 + 3 * k] = 1.0 if alive[k] else 0.0
            for r in range(act.shape[0]):
                row[TRACE_FIXED_COLS + r] = act[r]
            row[TRACE_FIXED_COLS + act.shape[0]] = out_l
            row[TRACE_FIXED_COLS + act.shape[0] + 1] = out_r
    return steps, landed == 2


@njit(cache=True, nogil=True)
def simulate_batch(W, gains, biases, taus, pa, pb, n_sensors, motor_l, motor_r,
                   trials, dt, max_speed, half_travel, radius, max_range,
                   ray_dx, ray_dy, max_steps, offsets, steps, ok):
    dummy = np.zeros((1, 1))
    for b in range(trials.shape[0]):
        s, good = simulate_one(W, gains, biases, taus, pa, pb, n_sensors, motor_l, motor_r,
                               trials[b], dt, max_speed, half_travel, radius, max_range,
                               ray_dx, ray_dy, max_steps, dummy, False, offsets[b])
        steps[b] = s
        ok[b] = good

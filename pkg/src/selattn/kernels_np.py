"""Pure-numpy trial simulation, vectorised across a batch of trials.

Same arithmetic as :mod:`selattn.kernels`, step for step. Used when numba is
disabled and as an independent cross-check of the compiled kernel.
"""
import numpy as np

from .kernels import TRACE_FIXED_COLS


def _sigma(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500.0, 500.0)))


def sense_batch(u, ox, oy, alive, ray_dx, ray_dy, radius, max_range):
    """Sensor activations, shape (batch, rays)."""
    fx = (ox - u[:, None])[:, :, None]
    fy = oy[:, :, None]
    b = fx * ray_dx + fy * ray_dy
    c = fx * fx + fy * fy - radius * radius
    disc = b * b - c
    with np.errstate(invalid="ignore"):
        sq = np.sqrt(disc)
    s1 = b - sq
    s = np.where(s1 >= 0.0, s1, b + sq)
    hit = (disc >= 0.0) & (s >= 0.0) & (s <= max_range) & alive[:, :, None]
    d = np.where(hit, s, np.inf).min(axis=1)
    return np.where(np.isfinite(d), (max_range - d) / max_range, 0.0)


def simulate_batch(W, gains, biases, taus, pa, pb, n_sensors, motor_l, motor_r,
                   trials, dt, max_speed, half_travel, radius, max_range,
                   ray_dx, ray_dy, max_steps, trace=None):
    """Returns ``(offsets, steps, ok)``; fills ``trace`` for a batch of one."""
    trials = np.asarray(trials, dtype=float)
    nb = trials.shape[0]
    n = gains.shape[0]
    pb_mask = (pb >= 0).astype(float)
    pb_safe = np.where(pb >= 0, pb, 0)
    Wa = W[pa]
    Wb = W[pb_safe] * pb_mask[:, None]

    y = np.zeros((nb, n))
    ox = trials[:, [0, 4]] - 200.0
    oy = trials[:, [1, 5]].copy()
    vx = trials[:, [2, 6]]
    vy = trials[:, [3, 7]]
    alive = np.ones((nb, 2), dtype=bool)
    offsets = np.full((nb, 2), np.inf)
    steps = np.zeros(nb, dtype=np.int64)
    ok = np.zeros(nb, dtype=bool)
    running = np.ones(nb, dtype=bool)
    u = np.zeros(nb)
    t = 0.0
    step_coef = dt / taus
    for k in range(max_steps):
        if not running.any():
            break
        act = sense_batch(u, ox, oy, alive, ray_dx, ray_dy, radius, max_range)
        o = _sigma(gains * (y + biases))
        net = (o[:, pa, None] * Wa + o[:, pb_safe, None] * Wb).sum(axis=1)
        net[:, :n_sensors] += act
        y_next = y + step_coef * (-y + net)
        t += dt
        steps[running] = k + 1
        bad = running & ~np.all(np.abs(y_next) < 1e300, axis=1)
        if bad.any():
            running &= ~bad
        y = np.where(running[:, None], y_next, y)

        out_l = _sigma(gains[motor_l] * (y[:, motor_l] + biases[motor_l]))
        out_r = _sigma(gains[motor_r] * (y[:, motor_r] + biases[motor_r]))
        vel = max_speed * (out_r - out_l)
        u_old = u
        u = np.where(running, np.clip(u + vel * dt, -half_travel, half_travel), u)

        fall = vy * dt
        y_obj = oy - fall
        lands = running[:, None] & alive & (y_obj <= 0.0)
        moving = running[:, None] & alive & ~lands
        if lands.any():
            frac = np.where(lands, oy / fall, 0.0)
            xc = ox + vx * dt * frac
            ac = u_old[:, None] + (u - u_old)[:, None] * frac
            offsets = np.where(lands, np.abs(ac - xc), offsets)
            ox = np.where(lands, xc, ox)
            oy = np.where(lands, 0.0, oy)
            alive = alive & ~lands
        ox = np.where(moving, ox + vx * dt, ox)
        oy = np.where(moving, y_obj, oy)

        if trace is not None and running[0]:
            row = trace[k]
            row[0] = t
            row[1] = u[0] + 200.0
            for j in range(2):
                row[2 + 3 * j] = ox[0, j] + 200.0
                row[3 + 3 * j] = oy[0, j]
                row[4 + 3 * j] = float(alive[0, j])
            nr = act.shape[1]
            row[TRACE_FIXED_COLS:TRACE_FIXED_COLS + nr] = act[0]
            row[TRACE_FIXED_COLS + nr] = out_l[0]
            row[TRACE_FIXED_COLS + nr + 1] = out_r[0]

        finished = running & ~alive.any(axis=1)
        ok |= finished
        running &= ~finished
    return offsets, steps, ok

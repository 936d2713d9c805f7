"""Two-object catching world: geometry, sensors, motors, trial execution."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _jit, kernels, kernels_np
from .ctrnn import CtrnnParams, pair_order

MAX_SCORE = 200.0


@dataclass(frozen=True)
class WorldConfig:
    world_width: float = 400.0
    agent_diameter: float = 30.0
    object_diameter: float = 26.0
    sensor_range: float = 205.0
    sensor_count: int = 9
    visual_angle: float = math.pi / 6
    max_speed: float = 5.0
    dt: float = 0.1
    agent_start_x: float = 200.0
    catch_radius: float = 28.0

    def __post_init__(self):
        for name in ("world_width", "agent_diameter", "object_diameter", "sensor_range",
                     "visual_angle", "max_speed", "dt", "catch_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.sensor_count < 1 or self.sensor_count % 2 == 0:
            raise ValueError("sensor_count must be odd so one ray points straight up")

    @property
    def center_x(self) -> float:
        return self.world_width / 2

    @property
    def object_radius(self) -> float:
        return self.object_diameter / 2

    @property
    def agent_bounds(self) -> Tuple[float, float]:
        r = self.agent_diameter / 2
        return r, self.world_width - r

    @property
    def half_travel(self) -> float:
        return self.world_width / 2 - self.agent_diameter / 2


def ray_angles(cfg: WorldConfig = WorldConfig()) -> np.ndarray:
    """Ray angles from vertical, symmetric so that angle[k] == -angle[n-1-k] exactly."""
    n = cfg.sensor_count
    spacing = cfg.visual_angle / (n - 1) if n > 1 else 0.0
    half = (n - 1) // 2
    return (np.arange(n) - half) * spacing


def ray_directions(cfg: WorldConfig = WorldConfig()) -> np.ndarray:
    """Unit (dx, dy) per ray, pointing upward; shape (sensor_count, 2)."""
    a = ray_angles(cfg)
    return np.stack([np.sin(a), np.cos(a)], axis=1)


def ray_circle_distance(origin, direction, max_range: float, center, radius: float) -> Optional[float]:
    """Smallest s in [0, max_range] where the ray meets the circle boundary, else None."""
    s = kernels.ray_hit(float(center[0] - origin[0]), float(center[1] - origin[1]),
                        float(direction[0]), float(direction[1]), float(radius), float(max_range))
    return None if s < 0 else float(s)


@dataclass(eq=False)
class WorldState:
    agent_x: float
    # rows: (x, y, vx, vy, alive)
    objects: np.ndarray
    t: float = 0.0

    def copy(self) -> "WorldState":
        return WorldState(self.agent_x, self.objects.copy(), self.t)


def initial_state(trial, cfg: WorldConfig = WorldConfig()) -> WorldState:
    arr = trial_array(trial)
    objects = np.zeros((2, 5))
    objects[:, :4] = arr.reshape(2, 4)
    objects[:, 4] = 1.0
    return WorldState(cfg.agent_start_x, objects, 0.0)


def sense(cfg: WorldConfig, state: WorldState) -> np.ndarray:
    dirs = ray_directions(cfg)
    act = np.zeros(cfg.sensor_count)
    for r, (dx, dy) in enumerate(dirs):
        best = None
        for x, y, _, _, alive in state.objects:
            if not alive:
                continue
            s = ray_circle_distance((state.agent_x, 0.0), (dx, dy), cfg.sensor_range, (x, y), cfg.object_radius)
            if s is not None and (best is None or s < best):
                best = s
        if best is not None:
            act[r] = (cfg.sensor_range - best) / cfg.sensor_range
    return act


def motor_velocity(cfg: WorldConfig, out_left: float, out_right: float) -> float:
    return cfg.max_speed * (out_right - out_left)


@dataclass(frozen=True)
class Landing:
    index: int
    offset: float
    fraction: float


def step_world(cfg: WorldConfig, state: WorldState, agent_v: float) -> Tuple[WorldState, List[Landing]]:
    if abs(agent_v) > cfg.max_speed + 1e-12:
        raise ValueError(f"agent velocity {agent_v} exceeds max speed {cfg.max_speed}")
    lo, hi = cfg.agent_bounds
    new = state.copy()
    old_x = state.agent_x
    new.agent_x = min(max(old_x + agent_v * cfg.dt, lo), hi)
    new.t = state.t + cfg.dt
    events = []
    for k, (x, y, vx, vy, alive) in enumerate(state.objects):
        if not alive:
            continue
        fall = vy * cfg.dt
        if y - fall <= 0.0:
            frac = y / fall
            xc = x + vx * cfg.dt * frac
            ac = old_x + (new.agent_x - old_x) * frac
            events.append(Landing(k, abs(ac - xc), frac))
            new.objects[k, 0] = xc
            new.objects[k, 1] = 0.0
            new.objects[k, 4] = 0.0
        else:
            new.objects[k, 0] = x + vx * cfg.dt
            new.objects[k, 1] = y - fall
    return new, events


def score(offset1: float, offset2: float) -> float:
    return MAX_SCORE - (offset1 + offset2)


def score_percent(value: float) -> float:
    return value / MAX_SCORE * 100.0


TRACE_HEADER = (["t", "agent_x", "obj1_x", "obj1_y", "obj1_alive", "obj2_x", "obj2_y", "obj2_alive"])


def trace_header(cfg: WorldConfig = WorldConfig()) -> List[str]:
    return TRACE_HEADER + [f"sensor{k}" for k in range(cfg.sensor_count)] + ["motor_left", "motor_right"]


@dataclass(eq=False)
class TrialResult:
    score: float
    landing_offsets: Tuple[float, float]
    caught_first: bool
    caught_second: bool
    steps: int
    trace: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def caught_both(self) -> bool:
        return self.caught_first and self.caught_second


def trial_array(trial) -> np.ndarray:
    if hasattr(trial, "as_array"):
        return trial.as_array()
    arr = np.asarray(trial, dtype=float)
    if arr.shape != (8,):
        raise ValueError(f"trial must have 8 parameters, got shape {arr.shape}")
    return arr


def max_steps_for(trials: np.ndarray, cfg: WorldConfig) -> int:
    trials = np.atleast_2d(trials)
    t_land = np.max(trials[:, [1, 5]] / trials[:, [3, 7]])
    return int(math.ceil(t_land / cfg.dt)) + 2


class _Compiled:
    """Kernel-ready arrays for one network; cached per CtrnnParams."""

    def __init__(self, params: CtrnnParams, n_sensors: int):
        self.W = np.ascontiguousarray(params.weights, dtype=float)
        self.gains = np.ascontiguousarray(params.gains, dtype=float)
        self.biases = np.ascontiguousarray(params.biases, dtype=float)
        self.taus = np.ascontiguousarray(params.time_constants, dtype=float)
        self.pa, self.pb = pair_order(params.mirror_perm())
        self.n_sensors = n_sensors
        self.motor_l = params.n_neurons - 2
        self.motor_r = params.n_neurons - 1


def _compiled(params: CtrnnParams, cfg: WorldConfig) -> _Compiled:
    n_sensors = int(np.count_nonzero(params.input_mask))
    if n_sensors != cfg.sensor_count:
        raise ValueError(f"network has {n_sensors} sensory neurons, world has {cfg.sensor_count} rays")
    cached = getattr(params, "_compiled", None)
    if cached is None:
        cached = _Compiled(params, n_sensors)
        object.__setattr__(params, "_compiled", cached)
    return cached


def simulate(params: CtrnnParams, trials, cfg: WorldConfig = WorldConfig(), backend: Optional[str] = None):
    """Run many trials for one network. Returns ``(offsets, steps, ok)``."""
    trials = np.ascontiguousarray(np.atleast_2d(np.asarray(trials, dtype=float)))
    c = _compiled(params, cfg)
    dirs = ray_directions(cfg)
    ray_dx = np.ascontiguousarray(dirs[:, 0])
    ray_dy = np.ascontiguousarray(dirs[:, 1])
    max_steps = max_steps_for(trials, cfg)
    args = (c.W, c.gains, c.biases, c.taus, c.pa, c.pb, c.n_sensors, c.motor_l, c.motor_r,
            trials, cfg.dt, cfg.max_speed, cfg.half_travel, cfg.object_radius, cfg.sensor_range,
            ray_dx, ray_dy, max_steps)
    if (backend or _jit.get_backend()) == "numba":
        nb = trials.shape[0]
        offsets = np.empty((nb, 2))
        steps = np.empty(nb, dtype=np.int64)
        ok = np.empty(nb, dtype=np.bool_)
        kernels.simulate_batch(*args, offsets, steps, ok)
        return offsets, steps, ok
    return kernels_np.simulate_batch(*args)


def scores_from_offsets(offsets: np.ndarray, ok: np.ndarray) -> np.ndarray:
    s = MAX_SCORE - offsets.sum(axis=1)
    return np.where(ok, s, -np.inf)


def run_trial(params: CtrnnParams, trial, cfg: WorldConfig = WorldConfig(),
              record_trace: bool = False, backend: Optional[str] = None) -> TrialResult:
    arr = trial_array(trial)
    if not record_trace:
        offsets, steps, ok = simulate(params, arr[None, :], cfg, backend)
        return _result(offsets[0], int(steps[0]), bool(ok[0]), cfg)
    c = _compiled(params, cfg)
    dirs = ray_directions(cfg)
    ray_dx = np.ascontiguousarray(dirs[:, 0])
    ray_dy = np.ascontiguousarray(dirs[:, 1])
    max_steps = max_steps_for(arr, cfg)
    trace = np.zeros((max_steps, len(trace_header(cfg))))
    args = (c.W, c.gains, c.biases, c.taus, c.pa, c.pb, c.n_sensors, c.motor_l, c.motor_r)
    tail = (cfg.dt, cfg.max_speed, cfg.half_travel, cfg.object_radius, cfg.sensor_range, ray_dx, ray_dy, max_steps)
    if (backend or _jit.get_backend()) == "numba":
        offsets = np.empty(2)
        steps, ok = kernels.simulate_one(*args, np.ascontiguousarray(arr), *tail, trace, True, offsets)
    else:
        off2, st, okarr = kernels_np.simulate_batch(*args, arr[None, :], *tail, trace=trace)
        offsets, steps, ok = off2[0], int(st[0]), bool(okarr[0])
    return _result(offsets, int(steps), bool(ok), cfg, trace[:steps])


def _result(offsets, steps: int, ok: bool, cfg: WorldConfig, trace=None) -> TrialResult:
    if not ok:
        return TrialResult(-math.inf, (math.inf, math.inf), False, False, steps, trace)
    o1, o2 = float(offsets[0]), float(offsets[1])
    return TrialResult(score(o1, o2), (o1, o2), o1 <= cfg.catch_radius, o2 <= cfg.catch_radius, steps, trace)


def run_trial_stepwise(params: CtrnnParams, trial, cfg: WorldConfig = WorldConfig()) -> TrialResult:
    """Slow reference loop built from the public ctrnn/world operations."""
    from . import ctrnn

    state = initial_state(trial, cfg)
    net = ctrnn.reset(params)
    mask = np.asarray(params.input_mask, dtype=bool)
    n = params.n_neurons
    offsets = [math.inf, math.inf]
    steps = 0
    limit = max_steps_for(trial_array(trial), cfg)
    while state.objects[:, 4].any() and steps < limit:
        inputs = np.zeros(n)
        inputs[mask] = sense(cfg, state)
        net = ctrnn.step(params, net, inputs, cfg.dt)
        v = motor_velocity(cfg, ctrnn.output(params, net, n - 2), ctrnn.output(params, net, n - 1))
        state, events = step_world(cfg, state, v)
        for ev in events:
            offsets[ev.index] = ev.offset
        steps += 1
    return _result(offsets, steps, not state.objects[:, 4].any(), cfg)


def write_trace_csv(path, result: TrialResult, cfg: WorldConfig = WorldConfig()) -> None:
    if result.trace is None:
        raise ValueError("result carries no trace; rerun with record_trace=True")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace_header(cfg))
        for row in result.trace:
            w.writerow([repr(float(v)) for v in row])


def mirror_trial_array(trials: np.ndarray, cfg: WorldConfig = WorldConfig()) -> np.ndarray:
    """Reflect trials about the world centre (x -> width - x, vx -> -vx)."""
    out = np.array(trials, dtype=float, copy=True)
    out[..., [0, 4]] = cfg.world_width - out[..., [0, 4]]
    out[..., [2, 6]] = -out[..., [2, 6]]
    return out


def run_trials(params: CtrnnParams, trials: Sequence, cfg: WorldConfig = WorldConfig()) -> List[TrialResult]:
    arr = np.array([trial_array(t) for t in trials])
    offsets, steps, ok = simulate(params, arr, cfg)
    return [_result(offsets[i], int(steps[i]), bool(ok[i]), cfg) for i in range(len(arr))]

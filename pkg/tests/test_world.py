import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from selattn import _jit, world
from selattn.genome import Architecture, Genome, decode, genome_length, random_genome
from selattn.world import WorldConfig, WorldState

CFG = WorldConfig()


def march(origin, d, rng_max, center, r, step=0.01):
    """First boundary crossing along the ray: coarse march, then bisection."""
    s = np.arange(0.0, rng_max + step, step)
    s[-1] = min(s[-1], rng_max)
    px = origin[0] + s * d[0] - center[0]
    py = origin[1] + s * d[1] - center[1]
    f = np.hypot(px, py) - r
    sign = np.sign(f)
    idx = np.flatnonzero(sign[1:] != sign[:-1])
    if f[0] == 0:
        return 0.0
    if idx.size == 0:
        return None
    lo, hi = s[idx[0]], s[idx[0] + 1]
    g = lambda t: math.hypot(origin[0] + t * d[0] - center[0], origin[1] + t * d[1] - center[1]) - r
    glo = g(lo)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if (g(mid) > 0) == (glo > 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_ray_directions_symmetric():
    d = world.ray_directions(CFG)
    assert d.shape == (9, 2)
    assert d[4, 0] == 0.0 and d[4, 1] == 1.0
    for k in range(9):
        assert d[k, 0] == -d[8 - k, 0] and d[k, 1] == d[8 - k, 1]
    np.testing.assert_allclose(np.hypot(d[:, 0], d[:, 1]), 1.0, atol=1e-15)
    assert world.ray_angles(CFG)[-1] == pytest.approx(math.pi / 12)


def test_ray_circle_examples():
    assert world.ray_circle_distance((0, 0), (0, 1), 205, (0, 100), 13) == pytest.approx(87.0)
    assert world.ray_circle_distance((0, 0), (0, 1), 205, (0, -100), 13) is None
    assert world.ray_circle_distance((0, 0), (0, 1), 205, (0, 300), 13) is None
    assert world.ray_circle_distance((0, 0), (0, 1), 205, (40, 100), 13) is None


def test_ray_circle_against_marching_oracle():
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(1000):
        ang = rng.uniform(-math.pi / 12, math.pi / 12)
        d = (math.sin(ang), math.cos(ang))
        c = (rng.uniform(-60, 60), rng.uniform(-20, 230))
        got = world.ray_circle_distance((0.0, 0.0), d, 205.0, c, 13.0)
        want = march((0.0, 0.0), d, 205.0, c, 13.0)
        # perpendicular miss distance; near-tangent chords are shorter than the march step
        perp = abs(c[0] * d[1] - c[1] * d[0])
        if abs(perp - 13.0) < 1e-3:
            continue
        if got is None or want is None:
            assert got is None and want is None, (c, ang, got, want)
            continue
        assert got == pytest.approx(want, abs=1e-6)
        checked += 1
    assert checked > 100


def test_sense_examples():
    def state(objs, ax=200.0):
        o = np.zeros((2, 5))
        for k, (x, y, alive) in enumerate(objs):
            o[k] = (x, y, 0, 1, alive)
        return WorldState(ax, o)

    assert np.all(world.sense(CFG, state([(200, 100, 0), (210, 80, 0)])) == 0)
    assert np.all(world.sense(CFG, state([(200, 205 + 13 + 0.01, 1), (200, 500, 1)])) == 0)
    act = world.sense(CFG, state([(200, 100, 1), (200, 1000, 1)]))
    assert act[4] == pytest.approx((205 - 87) / 205)
    dirs = world.ray_directions(CFG)
    for k in range(9):
        s = march((200.0, 0.0), dirs[k], 205.0, (200.0, 100.0), 13.0)
        want = 0.0 if s is None else (205 - s) / 205
        assert act[k] == pytest.approx(want, abs=1e-6)
    assert act[0] == act[8] and act[3] == act[5]


def test_nearer_object_occludes():
    o = np.array([[200, 60, 0, 1, 1], [200, 150, 0, 1, 1]], float)
    act = world.sense(CFG, WorldState(200.0, o))
    assert act[4] == pytest.approx((205 - 47) / 205)


@settings(max_examples=200, deadline=None)
@given(st.floats(15, 385), st.floats(0, 400), st.floats(-50, 300), st.floats(0, 400), st.floats(-50, 300))
def test_sensor_range(ax, x1, y1, x2, y2):
    o = np.array([[x1, y1, 0, 1, 1], [x2, y2, 0, 1, 1]], float)
    act = world.sense(CFG, WorldState(ax, o))
    assert np.all((act >= 0) & (act <= 1))


def test_motor_velocity():
    assert world.motor_velocity(CFG, 0.3, 0.3) == 0.0
    assert world.motor_velocity(CFG, 0.0, 1.0) == 5.0
    assert world.motor_velocity(CFG, 0.1, 0.6) == pytest.approx(2.5)


def test_step_world_clamp_and_landing():
    o = np.array([[100, 0.3, 1.0, 4.0, 1], [300, 150, 0, 1, 1]], float)
    s, ev = world.step_world(CFG, WorldState(384.8, o), 5.0)
    assert s.agent_x == 385.0
    assert len(ev) == 1 and ev[0].index == 0
    assert ev[0].fraction == pytest.approx(0.75)
    # agent at 384.8 + 0.75*0.2, object at 100 + 1*0.1*0.75
    assert ev[0].offset == pytest.approx(abs(384.95 - 100.075))
    assert s.objects[0, 4] == 0 and s.objects[1, 1] == pytest.approx(149.9)
    with pytest.raises(ValueError):
        world.step_world(CFG, WorldState(200.0, o), 6.0)


def test_score_examples():
    assert world.score(0, 0) == 200
    assert world.score(30, 20) == 150
    assert world.score(200, 100) == -100


def zero_params(h=4):
    arch = Architecture(h)
    return decode(Genome(np.zeros(genome_length(arch)), arch))


def test_zero_weight_agent_stays_put():
    trial = np.array([180.0, 150.0, 0.5, 3.5, 220.0, 170.0, -0.5, 1.5])
    r = world.run_trial(zero_params(), trial, CFG, record_trace=True)
    assert np.all(r.trace[:, 1] == 200.0)
    xl1 = 180 + 0.5 * 150 / 3.5
    xl2 = 220 - 0.5 * 170 / 1.5
    assert r.score == pytest.approx(200 - abs(xl1 - 200) - abs(xl2 - 200), abs=1e-9)


@pytest.mark.parametrize("h", [0, 2, 4])
def test_backends_agree(h):
    rng = np.random.default_rng(h)
    arch = Architecture(h)
    from selattn.trials import generate_corpus

    trials = generate_corpus(20, 99).trials
    for _ in range(3):
        p = decode(random_genome(arch, rng))
        a = world.simulate(p, trials, CFG, backend="numba")
        b = world.simulate(p, trials, CFG, backend="numpy")
        # libm exp differs from numpy's by an ulp now and then
        np.testing.assert_allclose(a[0], b[0], rtol=0, atol=1e-9)
        np.testing.assert_array_equal(a[1], b[1])
        ref = world.run_trial_stepwise(p, trials[0], CFG)
        assert ref.landing_offsets[0] == pytest.approx(a[0][0, 0], abs=1e-7)
        assert ref.steps == a[1][0]


def test_trace_backends_agree():
    p = decode(random_genome(Architecture(2), np.random.default_rng(1)))
    trial = np.array([180.0, 150.0, 0.5, 3.5, 220.0, 170.0, -0.5, 1.5])
    a = world.run_trial(p, trial, CFG, record_trace=True, backend="numba")
    b = world.run_trial(p, trial, CFG, record_trace=True, backend="numpy")
    np.testing.assert_allclose(a.trace, b.trace, rtol=0, atol=1e-9)
    assert a.trace.shape == (a.steps, len(world.trace_header(CFG)))
    assert a.steps <= 2050


def test_trace_csv(tmp_path):
    p = zero_params()
    r = world.run_trial(p, np.array([200.0, 120, 0, 4, 200, 150, 0, 1.5]), CFG, record_trace=True)
    path = tmp_path / "t.csv"
    world.write_trace_csv(path, r, CFG)
    lines = path.read_text().splitlines()
    assert len(lines) == r.steps + 1
    assert lines[0].split(",") == world.trace_header(CFG)
    with pytest.raises(ValueError):
        world.write_trace_csv(path, world.run_trial(p, np.array([200.0, 120, 0, 4, 200, 150, 0, 1.5]), CFG), CFG)


def test_catch_flags_follow_offsets():
    r = world.run_trial(zero_params(), np.array([200.0, 120, 0, 4, 260, 150, 0, 1.5]), CFG)
    assert r.caught_first and not r.caught_second and not r.caught_both
    assert r.landing_offsets == pytest.approx((0.0, 60.0))


def test_disable_flag_selects_numpy_path():
    env = dict(os.environ, SELATTN_DISABLE_NUMBA="1")
    code = ("from selattn import _jit, kernels; import inspect;"
            "print(_jit.get_backend(), inspect.isfunction(kernels.simulate_one))")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]


def test_set_backend_validation():
    with pytest.raises(ValueError):
        _jit.set_backend("cuda")
    before = _jit.get_backend()
    _jit.set_backend("numpy")
    try:
        assert _jit.get_backend() == "numpy"
    finally:
        _jit.set_backend(before)

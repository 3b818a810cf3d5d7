import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wiretie.controller import PidGains, PidState, pid_step
from wiretie.geometry import yaw_rotation_matrix
from wiretie.simulator import SimAnchor, step_anchor

vec = st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3)


def test_zero_error_zero_command():
    cmd, _ = pid_step(PidGains(), PidState(), [1, 2, 3], [1, 2, 3], [0, 0, 0], 0.4, 0.05)
    assert np.array_equal(cmd, [0, 0, 0])


def test_pure_proportional_and_clamp():
    g = PidGains(kp=10, ki=0, kd=0)
    cmd, _ = pid_step(g, PidState(), [0, 0, 0], [1, 0, 0], [0, 0, 0], 0.0, 0.05)
    assert cmd[0] == pytest.approx(10.0)
    g = PidGains(kp=200, ki=0, kd=0)
    cmd, _ = pid_step(g, PidState(), [0, 0, 0], [1, 0, 0], [0, 0, 0], 0.0, 0.05)
    assert cmd[0] == 100.0


def test_derivative_on_velocity():
    g = PidGains(kp=0, ki=0, kd=2)
    cmd, _ = pid_step(g, PidState(), [0, 0, 0], [0, 0, 0], [0.5, 0, 0], 0.0, 0.05)
    assert cmd[0] == pytest.approx(-1.0)


def test_body_frame_rotation():
    g = PidGains(kp=10, ki=0, kd=0)
    cmd, _ = pid_step(g, PidState(), [0, 0, 0], [1, 0, 0], [0, 0, 0], math.pi / 2, 0.05)
    assert np.allclose(cmd, [0, -10, 0], atol=1e-12)


def test_integrator_clamped():
    g = PidGains(kp=0, ki=1, kd=0, integral_limit=0.5)
    s = PidState()
    for _ in range(100):
        cmd, s = pid_step(g, s, [0, 0, 0], [3, -3, 0], [0, 0, 0], 0.0, 0.1)
    assert np.allclose(s.integral, [0.5, -0.5, 0])
    assert np.allclose(cmd, [0.5, -0.5, 0])


def test_gain_validation():
    with pytest.raises(ValueError):
        PidGains(kp=-1)
    with pytest.raises(ValueError):
        PidGains(integral_limit=0)
    with pytest.raises(ValueError):
        pid_step(PidGains(), PidState(), [0, 0, 0], [0, 0, 0], [0, 0, 0], 0.0, 0.0)


@settings(max_examples=300)
@given(vec, vec, vec, st.floats(-10, 10), st.floats(1e-3, 1.0))
def test_output_always_bounded(p, ref, v, yaw, dt):
    cmd, state = pid_step(PidGains(), PidState(), p, ref, v, yaw, dt)
    assert np.all(np.abs(cmd) <= 100.0)
    assert np.all(np.abs(state.integral) <= 20.0)


@settings(max_examples=200)
@given(st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3),
       st.lists(st.floats(-0.2, 0.2), min_size=3, max_size=3), st.floats(-3, 3), st.floats(-3, 3))
def test_yaw_equivariance(err, v, yaw, rot):
    R = yaw_rotation_matrix(rot)
    err, v = np.asarray(err), np.asarray(v)
    a, _ = pid_step(PidGains(), PidState(), np.zeros(3), err, v, yaw, 0.05)
    b, _ = pid_step(PidGains(), PidState(), np.zeros(3), R @ err, R @ v, yaw + rot, 0.05)
    assert np.allclose(a, b, atol=1e-9)


def closed_loop(offset, yaw=0.4, seconds=8.0, dt=0.05):
    a = SimAnchor(0, np.array([0.0, 0.0, 1.0]), yaw=yaw, wire_attach_point=np.zeros(3))
    ref = a.position + offset
    s = PidState()
    errs, cmds = [], []
    for _ in range(int(seconds / dt)):
        cmd, s = pid_step(PidGains(), s, a.position, ref, a.velocity, a.yaw, dt)
        a = step_anchor(a, cmd, dt)
        errs.append(np.linalg.norm(ref - a.position))
        cmds.append(cmd)
    return np.array(errs), np.array(cmds), a, ref


def first_within(errs, dt, tol=0.1):
    idx = np.flatnonzero(errs < tol)
    return math.inf if idx.size == 0 else (idx[0] + 1) * dt


@pytest.mark.parametrize("offset", [[1, 0, 0], [0, -1, 0], [0, 0, 1], [0.6, 0.6, -0.529]])
def test_closed_loop_servo(offset):
    offset = np.asarray(offset, float)
    errs, cmds, a, ref = closed_loop(offset, seconds=30.0)
    assert first_within(errs, 0.05) <= 8.0
    assert np.all(np.abs(cmds) <= 100.0)
    # after the crossing the error stays below 20 % of the initial offset
    cross = int(np.argmin(errs[:200]))
    assert errs[cross:].max() < 0.2 * np.linalg.norm(offset)
    assert errs[-1] < 0.02

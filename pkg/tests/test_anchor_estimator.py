import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wiretie import anchor_estimator as ae
from wiretie.geometry import Pose, quat_from_yaw, wrap_angle, yaw_rotation_matrix


def belief_at(x=None, P=None, init=None):
    b = ae.AnchorBelief.initial(0, init or Pose([0, 0, 0.3]))
    if x is not None:
        b.x = np.asarray(x, float).copy()
    if P is not None:
        b.P = np.asarray(P, float).copy()
    return b


def random_state(rng):
    x = rng.normal(size=ae.N_STATE)
    x[ae.THETA] = rng.uniform(-math.pi, math.pi)
    x[ae.PHI] = rng.uniform(-math.pi, math.pi)
    return x


def finite_difference_jacobian(x, h=1e-6):
    J = np.zeros((ae.N_OBS, ae.N_STATE))
    for i in range(ae.N_STATE):
        d = np.zeros(ae.N_STATE)
        d[i] = h
        J[:, i] = (ae.ekf_measurement(x + d) - ae.ekf_measurement(x - d)) / (2 * h)
    return J


# ---------------------------------------------------------------- model

def test_initial_belief():
    b = ae.AnchorBelief.initial(3, Pose([1, 2, 0.5]))
    assert np.array_equal(b.position, [1, 2, 0.5])
    assert np.allclose(b.x[3:], 0.0)
    assert np.allclose(np.diag(b.P), [.01] * 6 + [.0025] + [.25] * 3 + [.01])
    assert b.anchor_id == 3 and b.fix_count == 0


def test_observation_bundle_requires_a_field():
    with pytest.raises(ValueError):
        ae.ObservationBundle()
    rows, vals = ae.ObservationBundle(odom_yaw=0.2, camera_fix=[1, 2, 3]).rows_and_values()
    assert list(rows) == [0, 1, 2, 9]
    assert np.allclose(vals, [1, 2, 3, 0.2])


def test_predict_examples():
    nc = ae.NoiseConfig.default(0.05)
    b = belief_at()
    b.x[ae.U] = [1, 2, 3]
    b.x[ae.PHI] = 0.3
    b.x[ae.THETA] = -0.2
    out = ae.ekf_predict(b, 0.05, nc)
    assert np.array_equal(out.x, b.x)
    b.x[ae.VEL] = [1, 0, 0]
    out = ae.ekf_predict(b, 0.05, nc)
    assert out.x[0] == pytest.approx(b.x[0] + 0.05, abs=1e-15)
    with pytest.raises(ValueError):
        ae.ekf_predict(b, 0.0, nc)


def test_predict_dense_oracle():
    dt = 0.1
    nc = ae.NoiseConfig(np.eye(ae.N_STATE), 1e-4 * np.eye(ae.N_STATE), np.eye(ae.N_OBS))
    out = ae.ekf_predict(belief_at(P=np.eye(ae.N_STATE)), dt, nc)
    assert np.allclose(np.diag(out.P)[:3], 1.0101, atol=1e-12)
    F = np.eye(11)
    for i in range(3):
        F[i, 3 + i] = dt
    assert np.allclose(out.P, F @ F.T + 1e-4 * np.eye(11), atol=1e-15)


def test_measurement_examples():
    x = np.zeros(11)
    x[ae.POS] = [1, 2, 3]
    x[ae.VEL] = [4, 5, 6]
    assert np.allclose(ae.ekf_measurement(x), [1, 2, 3, 1, 2, 3, 4, 5, 6, 0])
    x = np.zeros(11)
    x[ae.POS] = [1, 0, 0]
    x[ae.PHI] = math.pi / 2
    assert np.allclose(ae.ekf_measurement(x)[3:6], [0, 1, 0], atol=1e-12)
    x = np.zeros(11)
    x[ae.THETA] = 0.3
    assert ae.ekf_measurement(x)[9] == pytest.approx(-0.3)


def test_jacobian_structure():
    rng = np.random.default_rng(0)
    for _ in range(20):
        H = ae.ekf_jacobian(random_state(rng))
        assert np.array_equal(H[0:3, 0:3], np.eye(3))
        assert np.all(H[0:3, 3:] == 0)
        expect = np.zeros(11)
        expect[ae.THETA] = -1
        assert np.array_equal(H[9], expect)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = random_state(rng)
        H = ae.ekf_jacobian(x)
        J = finite_difference_jacobian(x)
        rel = np.abs(H - J) / np.maximum(1.0, np.abs(J))
        assert rel.max() < 1e-6


# ---------------------------------------------------------------- update

def test_zero_residual_update():
    nc = ae.NoiseConfig.default()
    rng = np.random.default_rng(2)
    b = belief_at(x=random_state(rng))
    h = ae.ekf_measurement(b.x)
    out = ae.ekf_update(b, ae.ObservationBundle(h[0:3], h[3:6], h[6:9], h[9]), nc)
    assert np.allclose(out.x, b.x, atol=1e-12)
    assert np.trace(out.P) <= np.trace(b.P)
    assert out.fix_count == 1 and out.last_camera_fix_age == 0.0


def test_diffuse_camera_fix():
    nc = ae.NoiseConfig.default()
    P = np.eye(11) * 0.01
    P[0:3, 0:3] = 1e6 * np.eye(3)
    out = ae.ekf_update(belief_at(P=P), ae.ObservationBundle(camera_fix=[3, -2, 1]), nc)
    assert np.linalg.norm(out.position - [3, -2, 1]) < 1e-3


def test_yaw_residual_wrapped():
    nc = ae.NoiseConfig.default()
    b = belief_at()
    b.x[ae.THETA] = -(math.pi - 0.01)  # predicted odom yaw pi - 0.01
    out = ae.ekf_update(b, ae.ObservationBundle(odom_yaw=-math.pi + 0.01), nc)
    # short way across the seam: theta moves by at most the 0.02 rad residual
    assert abs(wrap_angle(out.x[ae.THETA] - b.x[ae.THETA])) <= 0.02 + 1e-12
    assert -math.pi < out.x[ae.THETA] <= math.pi


def test_singular_innovation():
    nc = ae.NoiseConfig(np.zeros((11, 1)), np.zeros((1, 1)), np.zeros((10, 10)))
    with pytest.raises(ae.SingularInnovation):
        ae.ekf_update(belief_at(P=np.zeros((11, 11))), ae.ObservationBundle(camera_fix=[0, 0, 0]), nc)


def test_sequential_linear_rows_match_joint_update():
    nc = ae.NoiseConfig.default()
    rng = np.random.default_rng(3)
    for _ in range(20):
        b = belief_at(x=random_state(rng) * 0.1)
        fix = b.position + rng.normal(0, 0.05, 3)
        yaw = -b.x[ae.THETA] + rng.normal(0, 0.02)
        joint = ae.ekf_update(b, ae.ObservationBundle(camera_fix=fix, odom_yaw=yaw), nc)
        seq = ae.ekf_update(ae.ekf_update(b, ae.ObservationBundle(camera_fix=fix), nc),
                            ae.ObservationBundle(odom_yaw=yaw), nc)
        assert np.max(np.abs(joint.x - seq.x)) < 1e-9
        assert np.max(np.abs(joint.P - seq.P)) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_covariance_stays_symmetric_psd(seed):
    rng = np.random.default_rng(seed)
    nc = ae.NoiseConfig.default()
    b = belief_at(x=random_state(rng))
    for _ in range(40):
        b = ae.ekf_predict(b, 0.05, nc)
        h = ae.ekf_measurement(b.x) + rng.normal(0, 0.05, 10)
        fields = dict(camera_fix=h[0:3], odom_position=h[3:6], odom_velocity=h[6:9], odom_yaw=h[9])
        keep = {k: v for k, v in fields.items() if rng.random() < 0.6} or {"odom_yaw": h[9]}
        b = ae.ekf_update(b, ae.ObservationBundle(**keep), nc)
        assert np.array_equal(b.P, b.P.T)
        assert np.linalg.eigvalsh(b.P).min() > -1e-9
        assert -math.pi < b.x[ae.PHI] <= math.pi and -math.pi < b.x[ae.THETA] <= math.pi


# ---------------------------------------------------------------- observability

def _simulate(both, seed=0, dt=0.05, seconds=15.0):
    rng = np.random.default_rng(seed)
    nc = ae.NoiseConfig.default(dt)
    u_true, phi_true = np.array([1.0, 2.0, 0.0]), 0.3
    T = yaw_rotation_matrix(phi_true)
    b = belief_at(init=Pose([0, 0, 1.0]))
    var_u, var_phi = [], []
    for k in range(int(seconds / dt)):
        t = k * dt
        p = np.array([np.sin(0.6 * t), 0.5 * np.sin(1.1 * t), 1.0])
        v = np.array([0.6 * np.cos(0.6 * t), 0.55 * np.cos(1.1 * t), 0.0])
        b = ae.ekf_predict(b, dt, nc)
        fix = p + rng.normal(0, 0.05, 3)
        if both:
            z = ae.ObservationBundle(fix, T @ p + u_true + rng.normal(0, 0.02, 3),
                                     T @ v + rng.normal(0, 0.05, 3), 0.1 + rng.normal(0, 0.02))
        else:
            z = ae.ObservationBundle(camera_fix=fix)
        b = ae.ekf_update(b, z, nc)
        var_u.append(np.trace(b.P[ae.U, ae.U]))
        var_phi.append(b.P[ae.PHI, ae.PHI])
    return np.array(var_u), np.array(var_phi)


def test_camera_alone_never_informs_offsets():
    var_u, var_phi = _simulate(both=False)
    assert np.all(np.diff(var_u) >= -1e-15)
    assert np.all(np.diff(var_phi) >= -1e-15)


def test_both_sources_shrink_offset_variance():
    var_u, var_phi = _simulate(both=True)
    t = np.arange(len(var_u))
    assert np.polyfit(t, var_u, 1)[0] < 0
    assert np.polyfit(t, var_phi, 1)[0] < 0
    assert var_u[-1] < 0.01 * var_u[0]


# ---------------------------------------------------------------- gating and NEES

def test_gate_first_fix_uses_init_axis():
    b = belief_at(init=Pose([1, 1, 0.3]))
    assert ae.gate_camera_fix(b, [1, 1, 25.0], 0.5)
    assert ae.gate_camera_fix(b, [1.3, 1.3, 2.0], 0.5)
    assert not ae.gate_camera_fix(b, [3, 1, 1.0], 0.5)


def test_gate_axis_follows_tilted_init_frame():
    tilted = Pose([0, 0, 0], np.array([np.cos(0.25), np.sin(0.25), 0, 0]))  # 0.5 rad about x
    b = belief_at(init=tilted)
    up = 2.0 * tilted.rotation[:, 2]
    assert ae.gate_camera_fix(b, up, 0.1)
    assert not ae.gate_camera_fix(b, [0, 0, 2.0], 0.1)


def test_gate_later_fixes_use_estimate():
    b = belief_at(init=Pose([0, 0, 0.3]))
    b.fix_count = 1
    b.x[ae.POS] = [0, 0, 2.0]
    assert ae.gate_camera_fix(b, [0.1, 0, 2.2], 0.5)
    assert not ae.gate_camera_fix(b, [0, 0, 0.3], 0.5)
    assert ae.gate_camera_fix(b, [0, 0, 0.3], 0.5, is_first=True)


def test_nees_zero_at_mean_and_wrapped():
    b = belief_at()
    assert ae.nees(b, b.x) == 0.0
    x = b.x.copy()
    x[ae.PHI] = b.x[ae.PHI] + 2 * math.pi + 0.1
    assert ae.nees(b, x) == pytest.approx(0.1**2 / b.P[ae.PHI, ae.PHI])

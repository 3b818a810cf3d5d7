"""11-state EKF fusing camera position fixes with drifting anchor odometry.

State layout::

    0:3   anchor position, world [m]
    3:6   anchor velocity, world [m/s]
    6     yaw of the odom frame seen from the anchor [rad]
    7:10  odom-frame translation offset u [m]
    10    odom-frame yaw offset phi [rad]

Observation layout (10 rows)::

    0:3   camera fix (world)
    3:6   odom position   = T(phi) p + u
    6:9   odom velocity   = T(phi) v
    9     odom yaw        = -theta
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Pose, wrap_angle, yaw_rotation_matrix, yaw_rotation_matrix_derivative

N_STATE = 11
N_OBS = 10
POS = slice(0, 3)
VEL = slice(3, 6)
THETA = 6
U = slice(7, 10)
PHI = 10

CAM_ROWS = np.arange(0, 3)
ODOM_POS_ROWS = np.arange(3, 6)
ODOM_VEL_ROWS = np.arange(6, 9)
ODOM_YAW_ROW = 9

YAW_STATES = (THETA, PHI)


class SingularInnovation(np.linalg.LinAlgError):
    pass


@dataclass
class ObservationBundle:
    camera_fix: Optional[np.ndarray] = None
    odom_position: Optional[np.ndarray] = None
    odom_velocity: Optional[np.ndarray] = None
    odom_yaw: Optional[float] = None

    def __post_init__(self):
        if self.is_empty():
            raise ValueError("an observation bundle needs at least one field")

    def is_empty(self) -> bool:
        return (self.camera_fix is None and self.odom_position is None
                and self.odom_velocity is None and self.odom_yaw is None)

    def rows_and_values(self) -> tuple[np.ndarray, np.ndarray]:
        """Indices into the 10-row observation vector and the stacked values."""
        rows, vals = [], []
        if self.camera_fix is not None:
            rows.append(CAM_ROWS)
            vals.append(np.asarray(self.camera_fix, dtype=float))
        if self.odom_position is not None:
            rows.append(ODOM_POS_ROWS)
            vals.append(np.asarray(self.odom_position, dtype=float))
        if self.odom_velocity is not None:
            rows.append(ODOM_VEL_ROWS)
            vals.append(np.asarray(self.odom_velocity, dtype=float))
        if self.odom_yaw is not None:
            rows.append(np.array([ODOM_YAW_ROW]))
            vals.append(np.array([float(self.odom_yaw)]))
        return np.concatenate(rows), np.concatenate(vals)


@dataclass
class NoiseConfig:
    """Discrete-time noise model. ``Q`` is the per-step covariance injected
    through ``G``; ``R`` is the full 10x10 observation covariance."""

    G: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    @classmethod
    def default(cls, dt: float = 0.05, sigma_accel: float = 0.5, sigma_u: float = 1e-3,
                sigma_yaw: float = 1e-3, sigma_cam: float = 0.05, sigma_odom_pos: float = 0.02,
                sigma_odom_vel: float = 0.05, sigma_odom_yaw: float = 0.02) -> "NoiseConfig":
        # noise channels: velocity (3), theta, u (3), phi
        G = np.zeros((N_STATE, 8))
        G[3:6, 0:3] = np.eye(3)
        G[THETA, 3] = 1.0
        G[7:10, 4:7] = np.eye(3)
        G[PHI, 7] = 1.0
        q = np.array([(sigma_accel * dt) ** 2] * 3 + [sigma_yaw**2 * dt]
                     + [sigma_u**2 * dt] * 3 + [sigma_yaw**2 * dt])
        R = np.diag([sigma_cam**2] * 3 + [sigma_odom_pos**2] * 3
                    + [sigma_odom_vel**2] * 3 + [sigma_odom_yaw**2])
        return cls(G, np.diag(q), R)


@dataclass
class AnchorBelief:
    x: np.ndarray
    P: np.ndarray
    anchor_id: int = 0
    init_frame: Pose = field(default_factory=Pose)
    last_camera_fix_age: float = math.inf
    fix_count: int = 0

    @classmethod
    def initial(cls, anchor_id: int, init_frame: Pose) -> "AnchorBelief":
        x = np.zeros(N_STATE)
        x[POS] = init_frame.position
        P = np.diag([0.1**2] * 3 + [0.1**2] * 3 + [0.05**2] + [0.5**2] * 3 + [0.1**2])
        return cls(x, P, anchor_id, init_frame.copy())

    @property
    def position(self) -> np.ndarray:
        return self.x[POS].copy()

    @property
    def velocity(self) -> np.ndarray:
        return self.x[VEL].copy()

    def copy(self) -> "AnchorBelief":
        return AnchorBelief(self.x.copy(), self.P.copy(), self.anchor_id, self.init_frame.copy(),
                            self.last_camera_fix_age, self.fix_count)


def transition_matrix(dt: float) -> np.ndarray:
    F = np.eye(N_STATE)
    F[POS, VEL] = dt * np.eye(3)
    return F


def ekf_predict(belief: AnchorBelief, dt: float, noise: NoiseConfig) -> AnchorBelief:
    if dt <= 0:
        raise ValueError("dt must be positive")
    F = transition_matrix(dt)
    out = belief.copy()
    out.x = F @ belief.x
    P = F @ belief.P @ F.T + noise.G @ noise.Q @ noise.G.T
    out.P = 0.5 * (P + P.T)
    out.last_camera_fix_age = belief.last_camera_fix_age + dt
    return out


def ekf_measurement(x: np.ndarray) -> np.ndarray:
    """Predicted observation ``h(x)`` (roll and pitch assumed zero)."""
    T = yaw_rotation_matrix(x[PHI])
    p, v = x[POS], x[VEL]
    return np.concatenate((p, T @ p + x[U], T @ v, [-x[THETA]]))


def ekf_jacobian(x: np.ndarray) -> np.ndarray:
    T = yaw_rotation_matrix(x[PHI])
    dT = yaw_rotation_matrix_derivative(x[PHI])
    H = np.zeros((N_OBS, N_STATE))
    H[0:3, POS] = np.eye(3)
    H[3:6, POS] = T
    H[3:6, U] = np.eye(3)
    H[3:6, PHI] = dT @ x[POS]
    H[6:9, VEL] = T
    H[6:9, PHI] = dT @ x[VEL]
    H[9, THETA] = -1.0
    return H


def ekf_update(belief: AnchorBelief, z: ObservationBundle, noise: NoiseConfig,
               max_condition: float = 1e12) -> AnchorBelief:
    """EKF correction using only the rows present in ``z``."""
    rows, values = z.rows_and_values()
    x, P = belief.x, belief.P
    H = ekf_jacobian(x)[rows]
    e = values - ekf_measurement(x)[rows]
    yaw = rows == ODOM_YAW_ROW
    if yaw.any():
        e[yaw] = [wrap_angle(v) for v in e[yaw]]
    R = noise.R[np.ix_(rows, rows)]
    S = R + H @ P @ H.T
    if not np.all(np.isfinite(S)) or np.linalg.cond(S) > max_condition:
        raise SingularInnovation("innovation covariance is numerically singular")
    K = np.linalg.solve(S, H @ P).T  # P H^T S^-1 (S, P symmetric)
    out = belief.copy()
    out.x = x + K @ e
    for i in YAW_STATES:
        out.x[i] = wrap_angle(out.x[i])
    P_new = (np.eye(N_STATE) - K @ H) @ P
    out.P = 0.5 * (P_new + P_new.T)
    if z.camera_fix is not None:
        out.last_camera_fix_age = 0.0
        out.fix_count += 1
    return out


def gate_camera_fix(belief: AnchorBelief, fix, threshold: float = 0.5,
                    is_first: Optional[bool] = None) -> bool:
    """Accept a camera fix for this anchor.

    The first fix must lie within ``threshold`` of the z-axis of the takeoff
    frame (distance to the line, so any height passes); later fixes must lie
    within ``threshold`` of the current position estimate.
    """
    fix = np.asarray(fix, dtype=float)
    if is_first is None:
        is_first = belief.fix_count == 0
    if is_first:
        axis = belief.init_frame.rotation[:, 2]
        r = fix - belief.init_frame.position
        d = r - (r @ axis) * axis
    else:
        d = fix - belief.x[POS]
    return bool(np.linalg.norm(d) <= threshold)


def nees(belief: AnchorBelief, x_true: np.ndarray) -> float:
    """Normalized estimation error squared with wrapped yaw components."""
    err = x_true - belief.x
    for i in YAW_STATES:
        err[i] = wrap_angle(err[i])
    return float(err @ np.linalg.solve(belief.P, err))

"""Per-axis PID position servo producing small-drone velocity commands."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import yaw_rotation_matrix

COMMAND_LIMIT = 100.0


@dataclass
class PidGains:
    kp: np.ndarray = field(default_factory=lambda: np.full(3, 60.0))
    ki: np.ndarray = field(default_factory=lambda: np.full(3, 5.0))
    kd: np.ndarray = field(default_factory=lambda: np.full(3, 40.0))
    integral_limit: float = 20.0
    output_limit: float = COMMAND_LIMIT

    def __post_init__(self):
        self.kp = np.broadcast_to(np.asarray(self.kp, dtype=float), (3,)).copy()
        self.ki = np.broadcast_to(np.asarray(self.ki, dtype=float), (3,)).copy()
        self.kd = np.broadcast_to(np.asarray(self.kd, dtype=float), (3,)).copy()
        if np.any(self.kp < 0) or np.any(self.ki < 0) or np.any(self.kd < 0):
            raise ValueError("gains must be non-negative")
        if self.integral_limit <= 0 or self.output_limit <= 0:
            raise ValueError("limits must be positive")


@dataclass
class PidState:
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_error: np.ndarray = field(default_factory=lambda: np.zeros(3))


def pid_step(gains: PidGains, state: PidState, p_anchor, p_ref_world, v_anchor,
             anchor_yaw: float, dt: float) -> tuple[np.ndarray, PidState]:
    """One servo step toward ``p_ref_world`` with zero target velocity.

    The derivative acts on measured velocity. The world-frame command is
    rotated into the anchor body frame and clamped per axis.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    error = np.asarray(p_ref_world, dtype=float) - np.asarray(p_anchor, dtype=float)
    integral = np.clip(state.integral + error * dt, -gains.integral_limit, gains.integral_limit)
    raw = gains.kp * error + gains.ki * integral - gains.kd * np.asarray(v_anchor, dtype=float)
    body = yaw_rotation_matrix(-anchor_yaw) @ raw
    limit = min(gains.output_limit, COMMAND_LIMIT)
    cmd = np.clip(body, -limit, limit)
    return cmd, PidState(integral, error)

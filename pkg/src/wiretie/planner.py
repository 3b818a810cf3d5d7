"""Six-waypoint tying path in the target frame and the waypoint follower."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Pose

N_WAYPOINTS = 6

# Target frame: y along the bar, x toward the robot camera, z up.
# over the top, down behind, back underneath, up across the hanging wire, down to jam.
DEFAULT_WAYPOINTS = np.array([
    [0.8, 0.35, 0.3],
    [-0.4, 0.35, 0.3],
    [-0.4, 0.35, -0.45],
    [0.8, 0.35, -0.45],
    [0.8, -0.25, 0.35],
    [0.8, -0.25, -0.5],
])

DONE = N_WAYPOINTS


@dataclass
class TyingTrajectory:
    waypoints: np.ndarray
    mirrored: bool = False
    target_id: int = -1
    target: Pose = field(default_factory=Pose)

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float)
        if self.waypoints.shape != (N_WAYPOINTS, 3):
            raise ValueError(f"expected {N_WAYPOINTS} waypoints, got shape {self.waypoints.shape}")
        if np.any(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1) == 0):
            raise ValueError("consecutive waypoints must differ")

    def world_waypoints(self, target: Optional[Pose] = None) -> np.ndarray:
        return (target or self.target).transform(self.waypoints)

    def world_waypoint(self, j: int, target: Optional[Pose] = None) -> np.ndarray:
        return (target or self.target).transform(self.waypoints[j])


@dataclass
class FollowState:
    active_index: int = 0
    reach_tolerance: float = 0.10

    @property
    def done(self) -> bool:
        return self.active_index >= DONE


def mirror_waypoints(waypoints: np.ndarray) -> np.ndarray:
    """Reflect across the target XZ-plane."""
    out = np.array(waypoints, dtype=float)
    out[:, 1] = -out[:, 1]
    return out


def plan_tying(target: Pose, mirrored: bool = False, waypoints=None,
               target_id: int = -1) -> TyingTrajectory:
    base = DEFAULT_WAYPOINTS if waypoints is None else np.asarray(waypoints, dtype=float)
    wp = mirror_waypoints(base) if mirrored else base.copy()
    return TyingTrajectory(wp, mirrored, target_id, target.copy())


def advance(follow: FollowState, traj: TyingTrajectory, anchor_pos_world,
            target: Optional[Pose] = None) -> FollowState:
    """Move to the next waypoint once the active one is within tolerance."""
    if follow.done:
        raise ValueError("trajectory already completed")
    wp = traj.world_waypoint(follow.active_index, target)
    if np.linalg.norm(np.asarray(anchor_pos_world, dtype=float) - wp) <= follow.reach_tolerance:
        return FollowState(follow.active_index + 1, follow.reach_tolerance)
    return FollowState(follow.active_index, follow.reach_tolerance)


def winding_angle_xz(points: np.ndarray) -> float:
    """Signed angle swept about the target y-axis by a polyline, measured in
    the XZ-plane (rotation from +x toward +z is positive)."""
    pts = np.asarray(points, dtype=float)
    ang = np.unwrap(np.arctan2(pts[:, 2], pts[:, 0]))
    return float(ang[-1] - ang[0])


def min_axis_clearance(points: np.ndarray, samples: int = 50) -> float:
    """Smallest distance from the target y-axis along a polyline."""
    pts = np.asarray(points, dtype=float)
    best = np.inf
    for a, b in zip(pts[:-1], pts[1:]):
        s = np.linspace(0.0, 1.0, samples)[:, None]
        seg = a + s * (b - a)
        best = min(best, float(np.min(np.hypot(seg[:, 0], seg[:, 2]))))
    return best

"""Kalman-filtered registry of candidate wire-attachment frames.

Targets are assumed static: prediction only inflates covariance. Each track
carries a 6x6 covariance over (position, rotation vector); the two blocks
never couple because the measurement is the pose itself.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Pose, apply_rotation_vector, rotation_vector_between
from .perception import TargetFrameEstimate


class UnknownTarget(KeyError):
    pass


@dataclass
class TargetNoise:
    association_threshold: float = 0.3
    prior: np.ndarray = field(default_factory=lambda: np.diag([0.05**2] * 3 + [0.1**2] * 3))
    observation: np.ndarray = field(default_factory=lambda: np.diag([0.02**2] * 3 + [0.05**2] * 3))
    process: np.ndarray = field(default_factory=lambda: np.diag([1e-6] * 3 + [1e-6] * 3))


@dataclass
class TargetTrack:
    id: int
    pose: Pose
    covariance: np.ndarray
    hit_count: int = 1
    label: str = "bar"

    @property
    def position(self) -> np.ndarray:
        return self.pose.position

    @property
    def trace(self) -> float:
        return float(np.trace(self.covariance))


@dataclass
class TargetSet:
    tracks: list[TargetTrack] = field(default_factory=list)
    next_id: int = 0

    def copy(self) -> "TargetSet":
        return copy.deepcopy(self)

    def __len__(self) -> int:
        return len(self.tracks)

    def nearest(self, position) -> Optional[TargetTrack]:
        if not self.tracks:
            return None
        d = [np.linalg.norm(t.position - position) for t in self.tracks]
        return self.tracks[int(np.argmin(d))]


def predict_targets(targets: TargetSet, dt: float, process: Optional[np.ndarray] = None) -> TargetSet:
    """Covariance-only prediction: ``P += Q * dt``; poses are untouched."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    Q = TargetNoise().process if process is None else np.asarray(process, dtype=float)
    out = targets.copy()
    if dt == 0:
        return out
    for t in out.tracks:
        t.covariance = t.covariance + Q * dt
    return out


def observe_target(targets: TargetSet, obs: TargetFrameEstimate, threshold: Optional[float] = None,
                   noise: Optional[TargetNoise] = None) -> TargetSet:
    """Associate ``obs`` with the nearest track within ``threshold`` and
    update it, or register a new track."""
    noise = noise or TargetNoise()
    threshold = noise.association_threshold if threshold is None else threshold
    out = targets.copy()
    z_pos = obs.pose.position
    best, best_d = None, np.inf
    for t in out.tracks:
        d = float(np.linalg.norm(t.position - z_pos))
        if d <= threshold and d < best_d:
            best, best_d = t, d

    if best is None:
        out.tracks.append(TargetTrack(out.next_id, obs.pose.copy(), noise.prior.copy(), 1, obs.label))
        out.next_id += 1
        return out

    P = best.covariance
    S = P + noise.observation
    K = np.linalg.solve(S.T, P.T).T  # P S^-1
    e = np.concatenate((z_pos - best.position,
                        rotation_vector_between(obs.pose.orientation, best.pose.orientation)))
    dx = K @ e
    best.pose = Pose(best.position + dx[:3], apply_rotation_vector(best.pose.orientation, dx[3:]))
    P_new = (np.eye(6) - K) @ P
    best.covariance = 0.5 * (P_new + P_new.T)
    best.hit_count += 1
    return out


def get_target(targets: TargetSet, target_id: int) -> Pose:
    for t in targets.tracks:
        if t.id == target_id:
            return t.pose.copy()
    raise UnknownTarget(target_id)

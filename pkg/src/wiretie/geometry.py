"""Frame and rotation algebra.

Conventions used everywhere in the package:

* vectors are ``numpy`` arrays of shape ``(3,)``
* quaternions are arrays ``[w, x, y, z]`` (Hamilton product, active rotation)
* the world is right-handed and z-up; positive yaw is counterclockwise when
  viewed from +z
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-9


def vec3(x, y=None, z=None) -> np.ndarray:
    """Build a finite float 3-vector from a sequence or three scalars."""
    if y is None:
        v = np.asarray(x, dtype=float).reshape(3)
    else:
        v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {v}")
    return v


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12 or not np.isfinite(n):
        raise ValueError(f"cannot normalize quaternion {q}")
    return q / n


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product ``a * b``."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-15:
        return quat_identity()
    axis = axis / n
    s = math.sin(0.5 * angle)
    return quat_normalize([math.cos(0.5 * angle), *(s * axis)])


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw)])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to quaternion (Shepperd's method), ``w >= 0``."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = quat_normalize(q)
    return q if q[0] >= 0.0 else -q


def quat_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between quaternions, insensitive to the sign ambiguity."""
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def quat_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Rotation angle (rad) of the relative rotation between ``a`` and ``b``."""
    d = abs(float(np.dot(a, b)))
    return 2.0 * math.acos(min(1.0, d))


def rotation_vector_between(q_z: np.ndarray, q_x: np.ndarray) -> np.ndarray:
    """Small-angle rotation vector from orientation ``q_x`` to ``q_z``.

    Returns ``2 * Im(q_z * conj(q_x))``. The difference quaternion is taken
    in the hemisphere with non-negative real part, so the result is the
    short-way rotation and its norm approximates the relative angle.
    """
    d = quat_mul(q_z, quat_conj(q_x))
    if d[0] < 0.0:
        d = -d
    return 2.0 * d[1:].copy()


def apply_rotation_vector(q: np.ndarray, n) -> np.ndarray:
    """Rotate orientation ``q`` by the rotation vector ``n`` (world frame).

    The exponential map of ``n`` is left-multiplied onto ``q``, which makes
    this the inverse of :func:`rotation_vector_between` to first order.
    """
    n = np.asarray(n, dtype=float)
    angle = float(np.linalg.norm(n))
    if angle == 0.0:
        return np.array(q, dtype=float)
    return quat_normalize(quat_mul(quat_from_axis_angle(n / angle, angle), q))


def yaw_rotation_matrix(phi: float) -> np.ndarray:
    """Rotation about +z by ``phi`` (counterclockwise seen from above)."""
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw_rotation_matrix_derivative(phi: float) -> np.ndarray:
    """d/dphi of :func:`yaw_rotation_matrix`."""
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def yaw_of(q: np.ndarray) -> float:
    """Heading of the body x-axis projected on the ground plane."""
    R = quat_to_matrix(q)
    return math.atan2(R[1, 0], R[0, 0])


@dataclass
class Pose:
    """Rigid transform mapping frame-local coordinates into the parent frame."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=quat_identity)

    def __post_init__(self):
        self.position = vec3(self.position)
        self.orientation = quat_normalize(self.orientation)

    @classmethod
    def from_matrix(cls, R: np.ndarray, t) -> "Pose":
        return cls(np.asarray(t, dtype=float), quat_from_matrix(R))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map local points (``(3,)`` or ``(N, 3)``) into the parent frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.position

    def inverse_transform(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return (pts - self.position) @ self.rotation

    def compose(self, other: "Pose") -> "Pose":
        """``self * other``: ``other`` expressed in ``self``'s parent frame."""
        return Pose(self.transform(other.position), quat_mul(self.orientation, other.orientation))

    def inverse(self) -> "Pose":
        qi = quat_conj(self.orientation)
        return Pose(-quat_to_matrix(qi) @ self.position, qi)

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.orientation.copy())

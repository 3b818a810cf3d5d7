"""Seeded world model standing in for the hardware.

Contains the kinematic drone plant, drifting odometry, a ray-cast RGB-D
sensor with a synthetic box detector, the taut-wire wrap model, the tie
verifier and a quasi-static point-mass model of the wire-driven robot.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .anchor_estimator import ObservationBundle
from .geometry import Pose, quat_from_matrix, vec3, wrap_angle, yaw_rotation_matrix
from .perception import BoundingBox, DepthImage

GRAVITY = 9.81
MAX_TENSION = 180.0  # N, continuous, per winch module
WIRE_CAPACITY = 5.3  # m per winch
MAX_WINCHES = 8
REEL_RATE = 0.242  # m/s
ANCHOR_RADIUS = 0.1
ANCHOR_MASS = 0.005
UP = np.array([0.0, 0.0, 1.0])


class TensionLimit(ValueError):
    pass


class DegeneratePath(ValueError):
    pass


@dataclass
class Cylinder:
    p0: np.ndarray
    p1: np.ndarray
    radius: float
    label: str = "bar"
    name: str = ""

    def __post_init__(self):
        self.p0 = vec3(self.p0)
        self.p1 = vec3(self.p1)
        if self.radius <= 0:
            raise ValueError("cylinder radius must be positive")
        if np.linalg.norm(self.p1 - self.p0) == 0:
            raise ValueError("cylinder axis has zero length")

        seg = self.p1 - self.p0
        self._length = float(np.linalg.norm(seg))
        self._axis = seg / self._length
        a = self._axis
        helper = UP if abs(a @ UP) < 0.9 else np.array([1.0, 0.0, 0.0])
        e1 = helper - (helper @ a) * a
        e1 /= np.linalg.norm(e1)
        self._basis = (e1, np.cross(a, e1))

    @property
    def length(self) -> float:
        return self._length

    @property
    def axis(self) -> np.ndarray:
        return self._axis

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.p0 + self.p1)

    def plane_basis(self) -> tuple[np.ndarray, np.ndarray]:
        """Orthonormal ``e1, e2`` spanning the normal plane with ``e1 x e2 = axis``."""
        return self._basis

    def to_plane(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """2-D normal-plane coordinates and axial coordinate of ``points``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float)) - self.p0
        e1, e2 = self.plane_basis()
        return np.column_stack((pts @ e1, pts @ e2)), pts @ self.axis

    def distance_to_axis(self, point) -> float:
        xy, _ = self.to_plane(point)
        return float(np.linalg.norm(xy[0]))


@dataclass
class SimAnchor:
    id: int
    position: np.ndarray
    yaw: float = 0.0
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    odom_u: np.ndarray = field(default_factory=lambda: np.zeros(3))
    odom_phi: float = 0.0
    wire_attach_point: np.ndarray = field(default_factory=lambda: np.zeros(3))
    wire_deployed_length: float = WIRE_CAPACITY
    mass: float = ANCHOR_MASS
    flying: bool = False
    locked: bool = False
    # accumulated signed wire winding (root -> anchor) about each cylinder
    windings: Optional[np.ndarray] = None
    wind_angles: Optional[np.ndarray] = None  # (n_cyl, 2) last root / anchor angles

    def __post_init__(self):
        self.position = vec3(self.position)
        self.velocity = vec3(self.velocity)
        self.odom_u = vec3(self.odom_u)
        self.wire_attach_point = vec3(self.wire_attach_point)
        if not 0.0 <= self.wire_deployed_length <= WIRE_CAPACITY + 1e-12:
            raise ValueError("deployed wire length outside [0, 5.3] m")

    def copy(self) -> "SimAnchor":
        return copy.deepcopy(self)

    def true_state(self) -> np.ndarray:
        """Ground truth arranged like the estimator state vector."""
        return np.concatenate((self.position, self.velocity,
                               [-wrap_angle(self.yaw + self.odom_phi)], self.odom_u,
                               [wrap_angle(self.odom_phi)]))


@dataclass
class Winch:
    deployed_length: float = 0.0
    tension: float = 0.0
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    anchor_index: Optional[int] = None
    tethered: bool = False

    def __post_init__(self):
        self.offset = vec3(self.offset)


@dataclass
class RobotBody:
    pose: Pose = field(default_factory=Pose)
    mass: float = 8.0
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    winches: list[Winch] = field(default_factory=list)
    damping: float = 3.0
    ground_z: float = 0.0

    def __post_init__(self):
        if len(self.winches) > MAX_WINCHES:
            raise ValueError(f"at most {MAX_WINCHES} winches")
        self.velocity = vec3(self.velocity)

    @property
    def position(self) -> np.ndarray:
        return self.pose.position

    def attach_point(self, i: int) -> np.ndarray:
        return self.pose.position + self.winches[i].offset


@dataclass
class PlantNoise:
    sigma_velocity: float = 0.02
    sigma_odom_position: float = 0.02
    sigma_odom_velocity: float = 0.05
    sigma_odom_yaw: float = 0.02
    odom_drift_u: float = 0.0  # m/sqrt(s), random walk mode when > 0
    odom_drift_phi: float = 0.0  # rad/sqrt(s)
    sigma_depth: float = 0.005  # 1/m, multiplied by depth squared


@dataclass
class DetectorParams:
    center_sigma_px: float = 3.0
    scale_sigma: float = 0.05
    false_negative_rate: float = 0.1
    frame_dropout: float = 0.05
    min_pixels: int = 12


@dataclass
class CameraModel:
    width: int = 240
    height: int = 180
    fx: float = 170.0
    fy: float = 170.0
    cx: float = 119.5
    cy: float = 89.5
    pose: Pose = field(default_factory=Pose)

    def __post_init__(self):
        self._rays = None

    def rays(self) -> np.ndarray:
        """Optical-frame ray per pixel with unit z component, shape (h*w, 3)."""
        if self._rays is None:
            v, u = np.mgrid[0:self.height, 0:self.width]
            self._rays = np.column_stack((((u - self.cx) / self.fx).ravel(),
                                          ((v - self.cy) / self.fy).ravel(),
                                          np.ones(u.size)))
        return self._rays

    def with_pose(self, pose: Pose) -> "CameraModel":
        cam = copy.copy(self)
        cam.pose = pose
        return cam


@dataclass
class WorldModel:
    bars: list[Cylinder] = field(default_factory=list)
    robot: RobotBody = field(default_factory=RobotBody)
    anchors: list[SimAnchor] = field(default_factory=list)
    gravity: float = GRAVITY
    rng_seed: int = 0
    k_v: float = 0.01
    noise: PlantNoise = field(default_factory=PlantNoise)
    detector: DetectorParams = field(default_factory=DetectorParams)

    def copy(self) -> "WorldModel":
        return copy.deepcopy(self)


@dataclass
class WirePolyline:
    vertices: np.ndarray
    total_length: float
    wrap_cylinder: Optional[int] = None
    wrap_angle: float = 0.0  # rad of contact arc

    @property
    def first_contact(self) -> np.ndarray:
        return self.vertices[1]


def look_at_pose(position, target) -> Pose:
    """Optical-frame camera pose (z forward, x right, y down) aimed at ``target``."""
    position = vec3(position)
    z = vec3(target) - position
    z /= np.linalg.norm(z)
    up = UP if abs(z @ UP) < 0.999 else np.array([1.0, 0.0, 0.0])
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose(position, quat_from_matrix(np.column_stack((x, y, z))))


def yaw_pitch_pose(position, yaw: float, pitch: float) -> Pose:
    d = np.array([math.cos(pitch) * math.cos(yaw), math.cos(pitch) * math.sin(yaw), math.sin(pitch)])
    return look_at_pose(position, vec3(position) + d)


# ---------------------------------------------------------------- anchors

def step_anchor(anchor: SimAnchor, cmd, dt: float, rng: Optional[np.random.Generator] = None,
                k_v: float = 0.01, noise: Optional[PlantNoise] = None) -> SimAnchor:
    """Velocity-commanded kinematic drone, tethered by its wire.

    ``rng=None`` disables every noise source.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    noise = noise or PlantNoise()
    out = anchor.copy()
    if anchor.locked:
        out.velocity = np.zeros(3)
        return out
    v = k_v * (yaw_rotation_matrix(anchor.yaw) @ np.asarray(cmd, dtype=float))
    if rng is not None:
        v = v + rng.normal(0.0, noise.sigma_velocity, 3)
        if noise.odom_drift_u > 0:
            out.odom_u = anchor.odom_u + rng.normal(0.0, noise.odom_drift_u * math.sqrt(dt), 3)
        if noise.odom_drift_phi > 0:
            out.odom_phi = wrap_angle(anchor.odom_phi + rng.normal(0.0, noise.odom_drift_phi * math.sqrt(dt)))
    p = anchor.position + v * dt
    r = p - anchor.wire_attach_point
    dist = float(np.linalg.norm(r))
    if dist > anchor.wire_deployed_length:
        p = anchor.wire_attach_point + r * (anchor.wire_deployed_length / dist)
    out.velocity = (p - anchor.position) / dt
    out.position = p
    return out


def sense_odometry(anchor: SimAnchor, rng: Optional[np.random.Generator] = None,
                   noise: Optional[PlantNoise] = None) -> ObservationBundle:
    """Odometry in the drifting odom frame; exact inverse of the filter's
    measurement model (plus noise when ``rng`` is given)."""
    noise = noise or PlantNoise()
    T = yaw_rotation_matrix(anchor.odom_phi)
    pos = T @ anchor.position + anchor.odom_u
    vel = T @ anchor.velocity
    yaw = anchor.yaw + anchor.odom_phi
    if rng is not None:
        pos = pos + rng.normal(0.0, noise.sigma_odom_position, 3)
        vel = vel + rng.normal(0.0, noise.sigma_odom_velocity, 3)
        yaw = yaw + rng.normal(0.0, noise.sigma_odom_yaw)
    return ObservationBundle(odom_position=pos, odom_velocity=vel, odom_yaw=wrap_angle(yaw))


# ---------------------------------------------------------------- camera

def _ray_cylinder(o: np.ndarray, D: np.ndarray, cyl: Cylinder) -> np.ndarray:
    t = np.full(len(D), np.inf)
    # cull rays that miss the bounding sphere
    c = cyl.center - o
    bound2 = (0.5 * cyl.length) ** 2 + cyl.radius**2
    proj = D @ c
    dd = np.einsum("ij,ij->i", D, D)
    cand = np.nonzero((c @ c - proj * proj / dd <= bound2) & (proj > -np.sqrt(bound2)))[0]
    if cand.size == 0:
        return t
    D = D[cand]
    a = cyl.axis
    w = o - cyl.p0
    Da = D @ a
    Dp = D - Da[:, None] * a
    wp = w - (w @ a) * a
    A = np.einsum("ij,ij->i", Dp, Dp)
    B = 2.0 * (Dp @ wp)
    C = wp @ wp - cyl.radius**2
    disc = B * B - 4.0 * A * C
    tc = np.full(len(D), np.inf)
    ok = (disc >= 0) & (A > 1e-15)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    A_safe = np.where(ok, A, 1.0)
    for root in ((-B - sq) / (2 * A_safe), (-B + sq) / (2 * A_safe)):
        s = (w @ a) + root * Da
        hit = ok & (root > 1e-6) & (s >= 0.0) & (s <= cyl.length) & ~np.isfinite(tc)
        tc = np.where(hit, root, tc)
    t[cand] = tc
    return t


def _ray_sphere(o: np.ndarray, D: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    w = o - center
    A = np.einsum("ij,ij->i", D, D)
    B = 2.0 * (D @ w)
    C = w @ w - radius**2
    disc = B * B - 4.0 * A * C
    t = np.full(len(D), np.inf)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    for root in ((-B - sq) / (2 * A), (-B + sq) / (2 * A)):
        hit = ok & (root > 1e-6) & ~np.isfinite(t)
        t = np.where(hit, root, t)
    return t


def render_depth(world: WorldModel, camera: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Noiseless z-buffer render.

    Returns ``(depth, ids)``; ``ids`` holds ``i`` for bar ``i``, ``1000 + k``
    for anchor ``k`` and ``-1`` for empty pixels.
    """
    rays = camera.rays()
    R = camera.pose.rotation
    o = camera.pose.position
    D = rays @ R.T
    best = np.full(len(rays), np.inf)
    ids = np.full(len(rays), -1, dtype=np.int64)
    for i, cyl in enumerate(world.bars):
        t = _ray_cylinder(o, D, cyl)
        closer = t < best
        best = np.where(closer, t, best)
        ids = np.where(closer, i, ids)
    for anchor in world.anchors:
        if not (anchor.flying or anchor.locked):
            continue
        t = _ray_sphere(o, D, anchor.position, ANCHOR_RADIUS)
        closer = t < best
        best = np.where(closer, t, best)
        ids = np.where(closer, 1000 + anchor.id, ids)
    depth = np.where(np.isfinite(best), best, 0.0)
    return depth.reshape(camera.height, camera.width), ids.reshape(camera.height, camera.width)


def detect_boxes(world: WorldModel, ids: np.ndarray, rng: Optional[np.random.Generator] = None,
                 params: Optional[DetectorParams] = None) -> list[tuple[int, BoundingBox]]:
    """Synthetic detector: boxes around visible silhouettes, with jitter,
    false negatives and whole-frame dropout. Returns ``(object_id, box)``."""
    params = params or world.detector
    h, w = ids.shape
    if rng is not None and rng.random() < params.frame_dropout:
        return []
    out = []
    for obj in np.unique(ids[ids >= 0]):
        v, u = np.nonzero(ids == obj)
        if v.size < params.min_pixels:
            continue
        if rng is not None and rng.random() < params.false_negative_rate:
            continue
        u0, u1, v0, v1 = float(u.min()), float(u.max() + 1), float(v.min()), float(v.max() + 1)
        if rng is not None:
            cu = 0.5 * (u0 + u1) + rng.normal(0.0, params.center_sigma_px)
            cv = 0.5 * (v0 + v1) + rng.normal(0.0, params.center_sigma_px)
            su = max(1.0, (u1 - u0) * (1.0 + rng.normal(0.0, params.scale_sigma)))
            sv = max(1.0, (v1 - v0) * (1.0 + rng.normal(0.0, params.scale_sigma)))
            u0, u1, v0, v1 = cu - su / 2, cu + su / 2, cv - sv / 2, cv + sv / 2
        u0, v0 = max(0.0, u0), max(0.0, v0)
        u1, v1 = min(float(w), u1), min(float(h), v1)
        if u1 <= u0 or v1 <= v0:
            continue
        label = "anchor" if obj >= 1000 else world.bars[obj].label
        out.append((int(obj), BoundingBox(u0, v0, u1, v1, label)))
    return out


def sense_camera(world: WorldModel, camera: CameraModel,
                 rng: Optional[np.random.Generator] = None) -> tuple[DepthImage, list[BoundingBox]]:
    """Render depth (noise ``sigma_d * d^2`` per pixel) and detector boxes."""
    depth, ids = render_depth(world, camera)
    if rng is not None and world.noise.sigma_depth > 0:
        valid = depth > 0
        depth = depth + valid * rng.normal(0.0, 1.0, depth.shape) * world.noise.sigma_depth * depth**2
        depth = np.where(valid, np.maximum(depth, 1e-3), 0.0)
    boxes = [b for _, b in detect_boxes(world, ids, rng)]
    image = DepthImage(depth, camera.fx, camera.fy, camera.cx, camera.cy)
    return image, boxes


# ---------------------------------------------------------------- wire

def _angles(cyl: Cylinder, points: np.ndarray) -> np.ndarray:
    xy, _ = cyl.to_plane(points)
    return np.arctan2(xy[:, 1], xy[:, 0])


def update_windings(anchor: SimAnchor, world: WorldModel) -> SimAnchor:
    """Advance the per-cylinder winding history of the anchor's wire.

    The winding is the signed angle swept about each cylinder axis by the
    wire from its root to the anchor. It accumulates the anchor's (and the
    root's) angular increments while the wire stays within the cylinder's
    axial extent, and falls back to the straight-line value when the wire
    could slip off an end.
    """
    out = anchor.copy()
    n = len(world.bars)
    if n == 0:
        return out
    pts = np.vstack((anchor.wire_attach_point, anchor.position))
    cur = np.array([_angles(c, pts) for c in world.bars])  # (n, 2)
    fresh = np.array([wrap_angle(a[1] - a[0]) for a in cur])
    if anchor.windings is None or anchor.wind_angles is None or len(anchor.windings) != n:
        out.windings = fresh
    else:
        w = anchor.windings.copy()
        for i, cyl in enumerate(world.bars):
            _, s = cyl.to_plane(pts)
            mid = 0.5 * (s[0] + s[1])
            if not 0.0 <= mid <= cyl.length:
                w[i] = fresh[i]
                continue
            d_anchor = wrap_angle(cur[i, 1] - anchor.wind_angles[i, 1])
            d_root = wrap_angle(cur[i, 0] - anchor.wind_angles[i, 0])
            w[i] = w[i] + d_anchor - d_root
        out.windings = w
    out.wind_angles = cur
    return out


def _wrap_geometry(cyl: Cylinder, root: np.ndarray, tip: np.ndarray, winding: float):
    """Taut path around one cylinder for a given signed winding.

    Returns ``(length, vertices, arc)`` or ``None`` when the string does not
    touch the cylinder.
    """
    xy, s = cyl.to_plane(np.vstack((root, tip)))
    r = cyl.radius
    dP, dQ = np.linalg.norm(xy, axis=1)
    if dP <= r or dQ <= r:
        return None
    aP = math.atan2(xy[0, 1], xy[0, 0])
    cP, cQ = math.acos(r / dP), math.acos(r / dQ)
    arc = abs(winding) - cP - cQ
    if arc <= 0.0:
        return None
    sgn = 1.0 if winding > 0 else -1.0
    tP, tQ = math.sqrt(dP * dP - r * r), math.sqrt(dQ * dQ - r * r)
    length2d = tP + r * arc + tQ
    ds = s[1] - s[0]
    length = math.hypot(length2d, ds)
    e1, e2 = cyl.plane_basis()
    start = aP + sgn * cP
    n_arc = max(2, int(math.ceil(arc / (math.pi / 8))) + 1)
    verts = [root]
    for k in range(n_arc):
        frac = k / (n_arc - 1)
        ang = start + sgn * arc * frac
        along = (tP + r * arc * frac) / length2d
        verts.append(cyl.p0 + (s[0] + ds * along) * cyl.axis
                     + r * (math.cos(ang) * e1 + math.sin(ang) * e2))
    verts.append(tip)
    return length, np.array(verts), arc


def update_wire(anchor: SimAnchor, world: WorldModel) -> WirePolyline:
    """Shortest taut wire from the robot attach point to the anchor.

    Each cylinder acts as a wrap obstacle in its normal plane; the wrap
    amount follows the anchor's winding history when present (so a tied
    loop keeps its extra turn). Only the cylinder carrying the longest
    contact arc is wrapped.
    """
    root, tip = anchor.wire_attach_point, anchor.position
    straight = float(np.linalg.norm(tip - root))
    best = None
    pts = np.vstack((root, tip))
    for i, cyl in enumerate(world.bars):
        if anchor.windings is not None and len(anchor.windings) == len(world.bars):
            w = float(anchor.windings[i])
        else:
            a = _angles(cyl, pts)
            w = wrap_angle(a[1] - a[0])
        _, s = cyl.to_plane(pts)
        if not 0.0 <= 0.5 * (s[0] + s[1]) <= cyl.length:
            continue
        geo = _wrap_geometry(cyl, root, tip, w)
        if geo is not None and (best is None or geo[2] > best[3]):
            best = (i, geo[0], geo[1], geo[2])
    if best is None:
        return WirePolyline(np.vstack((root, tip)), straight)
    i, length, verts, arc = best
    return WirePolyline(verts, max(length, straight), i, arc)


def verify_tie(anchor_path, bar: Cylinder, wire_root=None) -> tuple[bool, float]:
    """Decide whether a flown path ties the wire around ``bar``.

    The path (prefixed with ``wire_root`` when the wire's robot end is
    known) is projected onto the bar's normal plane and its signed winding
    about the axis accumulated. Success needs at least one full turn and a
    final point at least one bar radius below the axis.
    """
    pts = np.asarray(anchor_path, dtype=float).reshape(-1, 3)
    if wire_root is not None:
        pts = np.vstack((vec3(wire_root), pts))
    if len(pts) < 2:
        raise DegeneratePath("path needs at least two points")
    xy, s = bar.to_plane(pts)
    rad = np.linalg.norm(xy, axis=1)
    keep = rad > 1e-6
    if not keep.any():
        raise DegeneratePath("every point projects onto the bar axis")
    ang = np.unwrap(np.arctan2(xy[keep, 1], xy[keep, 0]))
    winding = float(ang[-1] - ang[0])
    final = pts[-1]
    axis_pt = bar.p0 + s[-1] * bar.axis
    below = axis_pt[2] - final[2] >= bar.radius
    return bool(abs(winding) >= 2.0 * math.pi and below), winding


# ---------------------------------------------------------------- robot

def net_force(world: WorldModel, tensions) -> np.ndarray:
    """Sum of wire pulls at the robot minus gravity (ground reaction excluded)."""
    tensions = np.asarray(tensions, dtype=float)
    robot = world.robot
    F = np.array([0.0, 0.0, -robot.mass * world.gravity])
    for i, T in enumerate(tensions):
        if T <= 0:
            continue
        d = _wire_direction(world, i)
        if d is not None:
            F = F + T * d
    return F


def _wire_point(world: WorldModel, i: int) -> Optional[np.ndarray]:
    winch = world.robot.winches[i]
    if not winch.tethered or winch.anchor_index is None:
        return None
    anchor = world.anchors[winch.anchor_index]
    return update_wire(anchor, world).first_contact


def _wire_direction(world: WorldModel, i: int) -> Optional[np.ndarray]:
    p = _wire_point(world, i)
    if p is None:
        return None
    d = p - world.robot.attach_point(i)
    n = np.linalg.norm(d)
    return None if n < 1e-9 else d / n


def _sync_roots(world: WorldModel) -> None:
    for i, winch in enumerate(world.robot.winches):
        if winch.anchor_index is not None:
            a = world.anchors[winch.anchor_index]
            a.wire_attach_point = world.robot.attach_point(i)
            if a.locked:
                world.anchors[winch.anchor_index] = update_windings(a, world)


def step_robot(world: WorldModel, tension_commands, dt: float,
               reel_rate: float = REEL_RATE) -> WorldModel:
    """Quasi-static point-mass robot pulled by tethered wires.

    Winches are tension-controlled: a tensioned winch reels in or pays out
    at most ``reel_rate`` m/s, so the robot can neither approach a wire
    contact faster than the reel speed nor move away faster than the winch
    unwinds. An untensioned winch pays out freely and exerts no force.
    """
    tensions = np.asarray(tension_commands, dtype=float)
    if np.any(tensions > MAX_TENSION) or np.any(tensions < 0):
        raise TensionLimit(f"tension commands {tensions} outside [0, {MAX_TENSION}] N")
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = world.copy()
    robot = out.robot
    n_w = len(robot.winches)
    tensions = np.concatenate((tensions, np.zeros(max(0, n_w - len(tensions)))))[:n_w]
    for winch, T in zip(robot.winches, tensions):
        winch.tension = float(T)
    F = net_force(out, tensions)
    on_ground = robot.position[2] <= robot.ground_z + 1e-9
    v = robot.velocity.copy()
    if on_ground and F[2] <= 0.0:
        F[2] = 0.0
        v[2] = max(v[2], 0.0)
    v = v + dt * (F / robot.mass - robot.damping * v)
    for i, T in enumerate(tensions):
        d = _wire_direction(out, i) if T > 0 else None
        if d is not None:
            along = v @ d
            if along > reel_rate:
                v = v - (along - reel_rate) * d
    p = robot.position + v * dt
    if p[2] < robot.ground_z:
        p[2] = robot.ground_z
        v[2] = max(v[2], 0.0)
    robot.pose = Pose(p, robot.pose.orientation)
    robot.velocity = v
    _sync_roots(out)

    for i, (winch, T) in enumerate(zip(robot.winches, tensions)):
        if not winch.tethered or winch.anchor_index is None:
            continue
        wire = update_wire(out.anchors[winch.anchor_index], out)
        geom = wire.total_length
        if T > 0:
            new = min(max(geom, winch.deployed_length - reel_rate * dt),
                      winch.deployed_length + reel_rate * dt)
        else:
            new = max(winch.deployed_length, geom)
        new = min(new, WIRE_CAPACITY)
        excess = geom - new
        if excess > 1e-12:
            pull = wire.first_contact - robot.attach_point(i)
            pull /= np.linalg.norm(pull)
            robot.pose = Pose(robot.position + excess * pull, robot.pose.orientation)
            outward = robot.velocity @ pull
            if outward < 0:
                robot.velocity = robot.velocity - outward * pull
            _sync_roots(out)
        winch.deployed_length = new
        out.anchors[winch.anchor_index].wire_deployed_length = new
    return out

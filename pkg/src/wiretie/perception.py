"""Depth-image to target-frame / anchor-position pipeline.

mask -> cloud -> voxel downsample -> Euclidean clustering -> nearest cluster
-> (PCA target frame | centroid).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .geometry import Pose

LABELS = ("bar", "branch", "anchor")

_HEADER = struct.Struct("<QQdddd")


class PerceptionError(Exception):
    pass


class EmptyMask(PerceptionError):
    pass


class EmptyCluster(PerceptionError):
    pass


class DegenerateCloud(PerceptionError):
    pass


@dataclass
class DepthImage:
    depth: np.ndarray  # (height, width), meters, 0 = invalid
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=float)
        if self.depth.ndim != 2:
            raise ValueError("depth must be a 2-D array")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not np.all(np.isfinite(self.depth)) or np.any(self.depth < 0):
            raise ValueError("depth values must be finite and non-negative")

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def valid_count(self) -> int:
        return int(np.count_nonzero(self.depth > 0))

    def to_bytes(self) -> bytes:
        """Little-endian layout: u64 width, u64 height, f64 fx, fy, cx, cy,
        then row-major f64 depth values."""
        head = _HEADER.pack(self.width, self.height, self.fx, self.fy, self.cx, self.cy)
        return head + self.depth.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> "DepthImage":
        w, h, fx, fy, cx, cy = _HEADER.unpack_from(data, 0)
        body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
        if body.size != w * h:
            raise ValueError(f"expected {w * h} depth values, got {body.size}")
        return cls(body.reshape(h, w).astype(float), fx, fy, cx, cy)


@dataclass
class BoundingBox:
    """Pixel box; columns ``u`` in ``[u_min, u_max)``, rows ``v`` in ``[v_min, v_max)``."""

    u_min: float
    v_min: float
    u_max: float
    v_max: float
    label: str = "bar"

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if not (self.u_min < self.u_max and self.v_min < self.v_max):
            raise ValueError(f"degenerate box {self}")


@dataclass
class PointCloud:
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    frame: str = "world"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)

    def __len__(self) -> int:
        return self.points.shape[0]

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass
class TargetFrameEstimate:
    pose: Pose
    point_count: int
    principal_ratio: float
    label: str = "bar"


@dataclass
class PerceptionParams:
    shrink: float = 0.2
    voxel: float = 0.02
    cluster_tolerance: float = 0.05
    min_cluster_size: int = 10
    min_eigen_ratio: float = 1.5
    vertical_exclusion_deg: float = 5.0


def mask_depth(image: DepthImage, box: BoundingBox, shrink: float = 0.2) -> DepthImage:
    """Invalidate every pixel outside ``box`` contracted by ``shrink`` per side.

    Each side moves toward the box center by ``shrink`` times half the box
    extent, so ``shrink=0.5`` keeps the centered half-size box.
    """
    if not 0.0 <= shrink < 1.0:
        raise ValueError("shrink must lie in [0, 1)")
    bu0, bv0 = max(0.0, box.u_min), max(0.0, box.v_min)
    bu1, bv1 = min(float(image.width), box.u_max), min(float(image.height), box.v_max)
    if bu1 <= bu0 or bv1 <= bv0:
        raise EmptyMask(f"box {box} lies outside the {image.width}x{image.height} image")
    du = 0.5 * shrink * (bu1 - bu0)
    dv = 0.5 * shrink * (bv1 - bv0)
    u0, u1 = bu0 + du, bu1 - du
    v0, v1 = bv0 + dv, bv1 - dv
    cols = np.arange(image.width)
    rows = np.arange(image.height)
    ucols = (cols >= u0) & (cols < u1)
    vrows = (rows >= v0) & (rows < v1)
    if not ucols.any() or not vrows.any():
        raise EmptyMask(f"box {box} with shrink {shrink} keeps no pixels")
    depth = np.zeros_like(image.depth)
    sel = np.ix_(vrows, ucols)
    depth[sel] = image.depth[sel]
    return DepthImage(depth, image.fx, image.fy, image.cx, image.cy)


def depth_to_cloud(image: DepthImage, camera_pose: Optional[Pose] = None) -> PointCloud:
    """Back-project valid pixels through the pinhole model.

    Camera (optical) frame: x right, y down, z along the optical axis.
    ``camera_pose`` maps the optical frame into the world.
    """
    v, u = np.nonzero(image.depth > 0)
    d = image.depth[v, u]
    pts = np.column_stack(((u - image.cx) * d / image.fx, (v - image.cy) * d / image.fy, d))
    if camera_pose is None:
        return PointCloud(pts, "camera")
    return PointCloud(camera_pose.transform(pts), "world")


def voxel_downsample(cloud: PointCloud, voxel: float = 0.02) -> PointCloud:
    """Replace the points of each occupied voxel by their centroid.

    Voxel index is ``floor(coordinate / voxel)``; output is ordered by index.
    """
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    if len(cloud) == 0:
        return PointCloud(np.zeros((0, 3)), cloud.frame)
    keys = np.floor(cloud.points / voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((counts.size, 3))
    np.add.at(sums, inverse, cloud.points)
    return PointCloud(sums / counts[:, None], cloud.frame)


def euclidean_cluster(cloud: PointCloud, tolerance: float = 0.05, min_size: int = 10,
                      reference=None) -> list[PointCloud]:
    """Connected components of the ``tolerance``-neighbourhood graph.

    Components with fewer than ``min_size`` points are dropped. The rest are
    sorted by centroid distance to ``reference`` (origin when omitted); each
    cluster keeps its points in input order.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    n = len(cloud)
    if n == 0:
        return []
    pairs = cKDTree(cloud.points).query_pairs(tolerance, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    ref = np.zeros(3) if reference is None else np.asarray(reference, dtype=float)
    clusters = []
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        if idx.size < min_size:
            continue
        pts = cloud.points[idx]
        clusters.append((float(np.linalg.norm(pts.mean(axis=0) - ref)), int(idx[0]), pts))
    clusters.sort(key=lambda c: (c[0], c[1]))
    return [PointCloud(pts, cloud.frame) for _, _, pts in clusters]


def principal_axes(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and matching unit eigenvectors (columns) of
    the sample covariance of ``points``."""
    pts = np.asarray(points, dtype=float)
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    w, V = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    return w[order], V[:, order]


def extract_target_frame(cluster: PointCloud, camera_position,
                         min_eigen_ratio: float = 1.5,
                         vertical_exclusion_deg: float = 5.0,
                         label: str = "bar") -> TargetFrameEstimate:
    """Fit the target frame of a bar-like cluster.

    Origin at the centroid, y along the dominant principal direction, z the
    world-up direction made orthogonal to y, and x = y cross z. The sign of y
    is picked so that x faces the camera.
    """
    if len(cluster) < 3:
        raise DegenerateCloud(f"need at least 3 points, got {len(cluster)}")
    origin = cluster.centroid()
    w, V = principal_axes(cluster.points)
    ratio = math.inf if w[1] <= 1e-15 * max(w[0], 1e-300) else float(w[0] / w[1])
    if not ratio >= min_eigen_ratio:
        raise DegenerateCloud(f"no dominant axis (eigenvalue ratio {ratio:.3f})")
    y = V[:, 0] / np.linalg.norm(V[:, 0])
    up = np.array([0.0, 0.0, 1.0])
    if abs(y @ up) > math.cos(math.radians(vertical_exclusion_deg)):
        raise DegenerateCloud("principal axis is too close to vertical")
    z = up - (up @ y) * y
    z /= np.linalg.norm(z)
    x = np.cross(y, z)
    if x @ (np.asarray(camera_position, dtype=float) - origin) < 0.0:
        y = -y
        x = -x
    R = np.column_stack((x, y, z))
    return TargetFrameEstimate(Pose.from_matrix(R, origin), len(cluster), ratio, label)


def extract_anchor_position(cluster: PointCloud) -> np.ndarray:
    if len(cluster) == 0:
        raise EmptyCluster("cannot take the centroid of an empty cluster")
    return cluster.centroid()


def segment_nearest(image: DepthImage, box: BoundingBox, camera_pose: Pose,
                    params: PerceptionParams) -> Optional[PointCloud]:
    """Shared front half of the pipeline: returns the cluster nearest to the
    camera inside ``box``, or ``None`` when nothing survives."""
    try:
        masked = mask_depth(image, box, params.shrink)
    except EmptyMask:
        return None
    cloud = voxel_downsample(depth_to_cloud(masked, camera_pose), params.voxel)
    clusters = euclidean_cluster(cloud, params.cluster_tolerance, params.min_cluster_size,
                                 reference=camera_pose.position)
    return clusters[0] if clusters else None


def recognize_target(image: DepthImage, box: BoundingBox, camera_pose: Pose,
                     params: Optional[PerceptionParams] = None) -> Optional[TargetFrameEstimate]:
    params = params or PerceptionParams()
    cluster = segment_nearest(image, box, camera_pose, params)
    if cluster is None:
        return None
    try:
        return extract_target_frame(cluster, camera_pose.position, params.min_eigen_ratio,
                                    params.vertical_exclusion_deg, box.label)
    except DegenerateCloud:
        return None


def recognize_anchor(image: DepthImage, box: BoundingBox, camera_pose: Pose,
                     params: Optional[PerceptionParams] = None) -> Optional[np.ndarray]:
    params = params or PerceptionParams()
    cluster = segment_nearest(image, box, camera_pose, params)
    if cluster is None:
        return None
    return extract_anchor_position(cluster)

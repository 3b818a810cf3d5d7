"""Slow, independent reference implementations used by the tests."""

import math

import numpy as np


def union_find_clusters(points, tolerance):
    """O(n^2) single-linkage components as a set of frozensets of indices."""
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    pts = np.asarray(points, dtype=float)
    for i in range(n):
        close = np.flatnonzero(np.sqrt(((pts[i + 1:] - pts[i]) ** 2).sum(axis=1)) <= tolerance)
        for j in close + i + 1:
            ri, rj = find(i), find(int(j))
            if ri != rj:
                parent[ri] = rj
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return {frozenset(g) for g in groups.values()}


def grid_voxel_centroids(points, voxel):
    """Dictionary-based voxel centroids, keyed by floor(coordinate / voxel)."""
    cells = {}
    for p in points:
        key = tuple(math.floor(c / voxel) for c in p)
        cells.setdefault(key, []).append(p)
    return {k: np.mean(v, axis=0) for k, v in cells.items()}


def power_iteration_eigen(C, iters=5000, tol=1e-15):
    """Eigenpairs of a symmetric PSD matrix by power iteration plus deflation,
    largest eigenvalue first."""
    C = np.array(C, dtype=float)
    n = C.shape[0]
    vals, vecs = [], []
    rng = np.random.default_rng(123)
    for _ in range(n):
        v = rng.normal(size=n)
        for prev in vecs:
            v -= (v @ prev) * prev
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            w = C @ v
            for prev in vecs:
                w -= (w @ prev) * prev
            nw = np.linalg.norm(w)
            if nw < 1e-300:
                break
            w /= nw
            new_lam = float(w @ C @ w)
            if abs(new_lam - lam) < tol and np.linalg.norm(w - v) < 1e-12:
                v = w
                lam = new_lam
                break
            v, lam = w, new_lam
        vals.append(lam)
        vecs.append(v)
    return np.array(vals), np.column_stack(vecs)


def mask_count(width, height, box, shrink):
    """Count pixels whose index lies in the shrunk, clamped half-open box."""
    u0, v0 = max(0.0, box[0]), max(0.0, box[1])
    u1, v1 = min(float(width), box[2]), min(float(height), box[3])
    du, dv = 0.5 * shrink * (u1 - u0), 0.5 * shrink * (v1 - v0)
    count = 0
    for v in range(height):
        for u in range(width):
            if u0 + du <= u < u1 - du and v0 + dv <= v < v1 - dv:
                count += 1
    return count


def unwrapped_winding(points2d):
    """Signed angle swept around the origin by a 2-D polyline, accumulated
    segment by segment with the short-way increment."""
    total = 0.0
    prev = math.atan2(points2d[0][1], points2d[0][0])
    for x, y in points2d[1:]:
        a = math.atan2(y, x)
        d = a - prev
        while d > math.pi:
            d -= 2 * math.pi
        while d <= -math.pi:
            d += 2 * math.pi
        total += d
        prev = a
    return total


def circle_wrap_length(d1, d2, r, swept):
    """Taut string length around a circle of radius r between points at
    distances d1, d2 from its center whose angular separation is ``swept``
    (both tangents plus the contact arc)."""
    t1, t2 = math.sqrt(d1 * d1 - r * r), math.sqrt(d2 * d2 - r * r)
    arc = swept - math.acos(r / d1) - math.acos(r / d2)
    return t1 + t2 + r * max(arc, 0.0)

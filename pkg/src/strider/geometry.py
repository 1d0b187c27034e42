"""Planar poses, rotations, and 2D polygon operations shared across the stack.

Polygons are (N, 2) float arrays of vertices in counter-clockwise order unless
noted. All polygon ops here are allocation-light; the footstep planner calls
them in its inner loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def angle_between(u, v) -> float:
    """Unsigned angle in radians between two vectors (any dimension)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    c = float(np.dot(u, v) / (nu * nv))
    return math.acos(min(1.0, max(-1.0, c)))


def rot2(yaw: float) -> np.ndarray:
    """2x2 rotation matrix for a planar yaw."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def rotz(yaw: float) -> np.ndarray:
    """3x3 rotation about +Z."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Pose2:
    """Planar pose (x, y, yaw). Used for the robot body, goals, and waypoints."""

    x: float
    y: float
    yaw: float = 0.0

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def transform(self, local_xy) -> np.ndarray:
        """Map a local (x, y) offset into the world frame."""
        p = rot2(self.yaw) @ np.asarray(local_xy, dtype=float)
        return p + self.xy

    def distance_to(self, other: "Pose2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def yaw_to(self, other: "Pose2") -> float:
        return abs(wrap_angle(self.yaw - other.yaw))


@dataclass(frozen=True)
class Pose3:
    """6-DoF pose as position + yaw/pitch of principal axis is not enough for
    sensor frames, so we carry a full rotation matrix."""

    position: np.ndarray  # (3,)
    rotation: np.ndarray  # (3, 3), columns are frame axes in world

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.rotation.T + self.position


# ---------------------------------------------------------------------------
# polygon primitives


def polygon_signed_area(poly) -> float:
    # hot path for many tiny polygons; plain floats beat vectorization here
    pts = poly.tolist() if isinstance(poly, np.ndarray) else list(poly)
    n = len(pts)
    acc = 0.0
    for i in range(n):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % n]
        acc += ax * by - bx * ay
    return 0.5 * acc


def polygon_area(poly: np.ndarray) -> float:
    return abs(polygon_signed_area(poly))


def ensure_ccw(poly: np.ndarray) -> np.ndarray:
    if polygon_signed_area(poly) < 0.0:
        return poly[::-1].copy()
    return poly


def polygon_centroid(poly) -> np.ndarray:
    """Area centroid; falls back to vertex mean for degenerate polygons."""
    pts = poly.tolist() if isinstance(poly, np.ndarray) else list(poly)
    n = len(pts)
    a2 = cx = cy = 0.0
    for i in range(n):
        px, py = pts[i]
        qx, qy = pts[(i + 1) % n]
        cross = px * qy - qx * py
        a2 += cross
        cx += (px + qx) * cross
        cy += (py + qy) * cross
    if abs(a2) < 2e-12:
        m = len(pts)
        return np.array([sum(p[0] for p in pts) / m, sum(p[1] for p in pts) / m])
    return np.array([cx / (3.0 * a2), cy / (3.0 * a2)])


def is_convex(poly: np.ndarray, tol: float = 1e-9) -> bool:
    """True if every cross product of consecutive edges has one sign."""
    n = len(poly)
    if n < 3:
        return False
    d = np.roll(poly, -1, axis=0) - poly
    cross = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
    return bool(np.all(cross >= -tol) or np.all(cross <= tol))


def rectangle_corners(cx: float, cy: float, yaw: float, half_len: float, half_wid: float) -> np.ndarray:
    """CCW corners of an oriented rectangle (length along local +x)."""
    c, s = math.cos(yaw), math.sin(yaw)
    lc, ws = half_len * c, half_wid * s
    ls, wc = half_len * s, half_wid * c
    return np.array([
        [cx + lc - ws, cy + ls + wc],
        [cx - lc - ws, cy - ls + wc],
        [cx - lc + ws, cy - ls - wc],
        [cx + lc + ws, cy + ls - wc],
    ])


def clip_polygon_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of `subject` against a convex CCW `clip` polygon.

    Returns the clipped polygon (possibly empty, shape (0, 2)).
    """
    out = subject.tolist() if isinstance(subject, np.ndarray) else \
        [[float(x), float(y)] for x, y in subject]
    cl = clip.tolist() if isinstance(clip, np.ndarray) else \
        [[float(x), float(y)] for x, y in clip]
    n = len(cl)
    for i in range(n):
        if not out:
            break
        ax, ay = cl[i]
        bx, by = cl[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inp = out
        out = []
        prev = inp[-1]
        prev_in = ex * (prev[1] - ay) - ey * (prev[0] - ax) >= -1e-12
        for cur in inp:
            cur_in = ex * (cur[1] - ay) - ey * (cur[0] - ax) >= -1e-12
            if cur_in != prev_in:
                # edge crossing: intersect prev->cur with the clip edge line
                dx, dy = cur[0] - prev[0], cur[1] - prev[1]
                denom = ex * dy - ey * dx
                if abs(denom) > 1e-15:
                    t = (ex * (ay - prev[1]) - ey * (ax - prev[0])) / denom
                    out.append((prev[0] + t * dx, prev[1] + t * dy))
            if cur_in:
                out.append(cur)
            prev, prev_in = cur, cur_in
    if len(out) < 3:
        return np.zeros((0, 2))
    return np.array(out)


def point_in_polygon(pt, poly) -> bool:
    """Even-odd test; works for concave polygons. Boundary counts as inside."""
    x, y = float(pt[0]), float(pt[1])
    pts = poly.tolist() if isinstance(poly, np.ndarray) else poly
    inside = False
    n = len(pts)
    xj, yj = pts[n - 1]
    for i in range(n):
        xi, yi = pts[i]
        # boundary proximity counts as inside
        dx, dy = xi - xj, yi - yj
        L2 = dx * dx + dy * dy
        t = 0.0 if L2 == 0.0 else max(0.0, min(1.0, ((x - xj) * dx + (y - yj) * dy) / L2))
        ex, ey = x - (xj + t * dx), y - (yj + t * dy)
        if ex * ex + ey * ey < 1e-24:
            return True
        if (yi > y) != (yj > y):
            t = (y - yi) / (yj - yi)
            if x < xi + t * (xj - xi):
                inside = not inside
        xj, yj = xi, yi
    return inside


def dist_point_segment(p, a, b) -> float:
    px, py = float(p[0]), float(p[1])
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / L2))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def dist_point_polygon_boundary(pt, poly: np.ndarray) -> float:
    """Distance from a point to the polygon outline (not signed)."""
    n = len(poly)
    return min(dist_point_segment(pt, poly[i], poly[(i + 1) % n]) for i in range(n))


def signed_depth_in_polygon(pt, poly: np.ndarray) -> float:
    """Positive distance to the boundary when inside, negative when outside."""
    d = dist_point_polygon_boundary(pt, poly)
    return d if point_in_polygon(pt, poly) else -d


def convex_hull(points) -> np.ndarray:
    """Convex hull (CCW, no repeated endpoint) via Andrew's monotone chain."""
    raw = points.tolist() if isinstance(points, np.ndarray) else \
        [[float(x), float(y)] for x, y in points]
    pts = sorted(set((p[0], p[1]) for p in raw))
    if len(pts) < 3:
        return np.array(pts).reshape(-1, 2)

    def half(seq):
        out: list[tuple[float, float]] = []
        for p in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) > 1e-15:
                    break
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def polygon_outline_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum distance between two polygon outlines, ignoring containment.

    Unlike polygon_min_distance this reports the boundary-to-boundary gap even
    when one polygon lies inside the other, which is what foothold-clearance
    scoring needs. Returns 0 only when the outlines touch or cross.
    """
    na, nb = len(a), len(b)
    best = math.inf
    for i in range(na):
        p, q = a[i], a[(i + 1) % na]
        for j in range(nb):
            r, s = b[j], b[(j + 1) % nb]
            if _segments_intersect(p, q, r, s):
                return 0.0
            best = min(
                best,
                dist_point_segment(p, r, s),
                dist_point_segment(q, r, s),
                dist_point_segment(r, p, q),
                dist_point_segment(s, p, q),
            )
    return best


def polygon_min_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum distance between two polygon outlines; 0 if they intersect/overlap."""
    if point_in_polygon(a[0], b) or point_in_polygon(b[0], a):
        return 0.0
    na, nb = len(a), len(b)
    best = math.inf
    for i in range(na):
        p, q = a[i], a[(i + 1) % na]
        for j in range(nb):
            r, s = b[j], b[(j + 1) % nb]
            if _segments_intersect(p, q, r, s):
                return 0.0
            best = min(
                best,
                dist_point_segment(p, r, s),
                dist_point_segment(q, r, s),
                dist_point_segment(r, p, q),
                dist_point_segment(s, p, q),
            )
    return best


def _segments_intersect(p, q, r, s) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if v > 1e-15:
            return 1
        if v < -1e-15:
            return -1
        return 0

    o1, o2 = orient(p, q, r), orient(p, q, s)
    o3, o4 = orient(r, s, p), orient(r, s, q)
    return o1 != o2 and o3 != o4


def polygons_overlap(a, b) -> bool:
    """True if two convex polygons share interior area (touching edges do not)."""
    pa = a.tolist() if isinstance(a, np.ndarray) else [[float(x), float(y)] for x, y in a]
    pb = b.tolist() if isinstance(b, np.ndarray) else [[float(x), float(y)] for x, y in b]
    ax0 = min(p[0] for p in pa); ax1 = max(p[0] for p in pa)
    bx0 = min(p[0] for p in pb); bx1 = max(p[0] for p in pb)
    if ax1 <= bx0 + 1e-12 or bx1 <= ax0 + 1e-12:
        return False
    ay0 = min(p[1] for p in pa); ay1 = max(p[1] for p in pa)
    by0 = min(p[1] for p in pb); by1 = max(p[1] for p in pb)
    if ay1 <= by0 + 1e-12 or by1 <= ay0 + 1e-12:
        return False
    # separating axis over both edge sets; convexity assumed, orientation free
    for poly in (pa, pb):
        n = len(poly)
        for i in range(n):
            px, py = poly[i]
            qx, qy = poly[(i + 1) % n]
            nx, ny = qy - py, px - qx
            scale = math.hypot(nx, ny)
            if scale == 0.0:
                continue
            eps = 1e-12 * scale
            proj_a = [vx * nx + vy * ny for vx, vy in pa]
            proj_b = [vx * nx + vy * ny for vx, vy in pb]
            if min(proj_b) >= max(proj_a) - eps or min(proj_a) >= max(proj_b) - eps:
                return False
    return True


def plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Right-handed in-plane basis (u, v) for a unit plane normal.

    For near-vertical normals the u axis tracks world +X so that plane-frame
    coordinates of level terrain stay aligned with the world grid.
    """
    n = np.asarray(normal, dtype=float)
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[2]) > 0.5 else np.array([0.0, 0.0, 1.0])
    u = ref - n * float(np.dot(ref, n))
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    return u, v


def fit_plane(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Least-squares plane through 3D points.

    Returns (centroid, unit normal, rms residual). The normal is oriented so
    its z component is non-negative. Caller must guard against degenerate
    (collinear) point sets via the residual spread check it needs.
    """
    pts = np.asarray(points, dtype=float)
    centroid = pts.mean(axis=0)
    d = pts - centroid
    cov = d.T @ d
    w, v = np.linalg.eigh(cov)
    normal = v[:, 0]
    if normal[2] < 0.0:
        normal = -normal
    rms = math.sqrt(max(0.0, float(w[0]) / len(pts)))
    return centroid, normal, rms

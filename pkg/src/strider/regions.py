"""Planar region extraction from a single depth frame.

The pipeline trades generality for speed: blur the depth image, fit one plane
per small pixel patch, grow patch-grid regions by normal and plane-distance
agreement, then polygonize each region directly from the patch mask. Polygon
vertices come from intersecting patch-corner pixel rays with the region plane,
so neighboring cells share vertices exactly and the convex pieces tile the
region without gaps.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import ensure_ccw, fit_plane, plane_basis, polygon_area
from .sensors import DepthImage


@dataclass(frozen=True)
class RegionParams:
    patch_px: int = 8
    patch_min_valid_fraction: float = 0.5
    patch_max_rms: float = 0.015
    normal_tol_deg: float = 20.0
    plane_dist_tol: float = 0.02
    min_patches: int = 8
    min_area: float = 0.015

    def __post_init__(self):
        if self.patch_px < 2:
            raise ValueError("patch_px must be at least 2")
        if not (0.0 < self.normal_tol_deg < 90.0):
            raise ValueError("normal_tol_deg out of range")


@dataclass(frozen=True)
class PlanarRegion:
    region_id: int
    plane_point: np.ndarray            # (3,)
    plane_normal: np.ndarray           # unit, z >= 0 for non-vertical planes
    basis: np.ndarray                  # (3, 2) in-plane axes, columns u and v
    concave_hull: np.ndarray           # (K, 2) outer boundary, plane frame, ccw
    convex_polygons: tuple[np.ndarray, ...]  # ccw, plane frame; exact cell tiling
    patch_count: int
    area: float
    fit_rms: float

    def to_world(self, pts2: np.ndarray) -> np.ndarray:
        pts2 = np.asarray(pts2, dtype=float)
        return self.plane_point + pts2 @ self.basis.T

    def to_plane(self, pts3: np.ndarray) -> np.ndarray:
        return (np.asarray(pts3, dtype=float) - self.plane_point) @ self.basis

    def height_at(self, x: float, y: float) -> float:
        """z of the region plane below a vertical line (plane must not be vertical)."""
        n = self.plane_normal
        if abs(n[2]) < 1e-6:
            raise ValueError("region plane is vertical")
        p = self.plane_point
        return p[2] - (n[0] * (x - p[0]) + n[1] * (y - p[1])) / n[2]

    def hull_world_xy(self) -> np.ndarray:
        return self.to_world(self.concave_hull)[:, :2]

    def convex_world_xy(self) -> tuple[np.ndarray, ...]:
        return tuple(ensure_ccw(self.to_world(p)[:, :2]) for p in self.convex_polygons)


@dataclass(frozen=True)
class RegionExtraction:
    regions: tuple[PlanarRegion, ...]
    label_grid: np.ndarray             # (gh, gw) region_id per patch, -1 elsewhere
    patch_px: int
    timestamp: float
    compute_s: float
    discarded: dict = field(default_factory=dict)   # reason -> candidate count


_BLUR_KERNEL = None


def _blur_kernel() -> np.ndarray:
    global _BLUR_KERNEL
    if _BLUR_KERNEL is None:
        g = np.exp(-0.5 * np.arange(-2.0, 3.0) ** 2)
        _BLUR_KERNEL = np.outer(g, g)
    return _BLUR_KERNEL


def blur_depth(depths: np.ndarray) -> np.ndarray:
    """5x5 Gaussian blur that ignores invalid (zero) pixels.

    A pixel keeps its validity: invalid stays invalid, valid pixels average
    only over valid neighbors, so depth never bleeds across dropout holes.
    """
    valid = depths > 0.0
    k = _blur_kernel()
    pd = np.pad(np.where(valid, depths, 0.0), 2)
    pm = np.pad(valid.astype(float), 2)
    wd = np.lib.stride_tricks.sliding_window_view(pd, (5, 5))
    wm = np.lib.stride_tricks.sliding_window_view(pm, (5, 5))
    num = np.einsum("ijkl,kl->ij", wd, k)
    den = np.einsum("ijkl,kl->ij", wm, k)
    out = np.where(valid & (den > 0.0), num / np.where(den > 0.0, den, 1.0), 0.0)
    return out


def _patch_planes(points: np.ndarray, valid: np.ndarray, params: RegionParams):
    """Per-patch centroid, normal and residual from batched 3x3 eigendecompositions."""
    h, w, _ = points.shape
    p = params.patch_px
    gh, gw = h // p, w // p
    pts = points[: gh * p, : gw * p].reshape(gh, p, gw, p, 3).transpose(0, 2, 1, 3, 4)
    pts = pts.reshape(gh, gw, p * p, 3)
    msk = valid[: gh * p, : gw * p].reshape(gh, p, gw, p).transpose(0, 2, 1, 3)
    msk = msk.reshape(gh, gw, p * p)

    counts = msk.sum(axis=2)
    safe = np.maximum(counts, 1)[..., None]
    pts0 = np.where(msk[..., None], pts, 0.0)
    centroid = pts0.sum(axis=2) / safe
    d = np.where(msk[..., None], pts - centroid[:, :, None, :], 0.0)
    cov = np.einsum("ijka,ijkb->ijab", d, d) / np.maximum(counts, 1)[..., None, None]

    evals, evecs = np.linalg.eigh(cov)
    normal = evecs[..., 0]                       # eigenvector of smallest eigenvalue
    flip = normal[..., 2] < 0.0
    normal = np.where(flip[..., None], -normal, normal)
    rms = np.sqrt(np.maximum(evals[..., 0], 0.0))

    ok = (counts >= params.patch_min_valid_fraction * p * p) & (rms <= params.patch_max_rms)
    return centroid, normal, rms, ok


def _grow(centroid, normal, ok, params: RegionParams):
    """Greedy DFS over the patch grid; seeds scan row-major, neighbors N,E,S,W."""
    gh, gw = ok.shape
    labels = np.full((gh, gw), -1, dtype=int)
    cos_tol = math.cos(math.radians(params.normal_tol_deg))
    groups: list[list[tuple[int, int]]] = []

    for si in range(gh):
        for sj in range(gw):
            if not ok[si, sj] or labels[si, sj] >= 0:
                continue
            gid = len(groups)
            members = [(si, sj)]
            labels[si, sj] = gid
            n_sum = normal[si, sj].copy()
            c_sum = centroid[si, sj].copy()
            stack = [(si, sj)]
            while stack:
                i, j = stack.pop()
                n_ref = n_sum / np.linalg.norm(n_sum)
                c_ref = c_sum / len(members)
                for di, dj in ((-1, 0), (0, 1), (1, 0), (0, -1)):
                    a, b = i + di, j + dj
                    if not (0 <= a < gh and 0 <= b < gw):
                        continue
                    if labels[a, b] >= 0 or not ok[a, b]:
                        continue
                    if float(normal[a, b] @ n_ref) < cos_tol:
                        continue
                    if abs(float((centroid[a, b] - c_ref) @ n_ref)) > params.plane_dist_tol:
                        continue
                    labels[a, b] = gid
                    members.append((a, b))
                    n_sum += normal[a, b]
                    c_sum += centroid[a, b]
                    stack.append((a, b))
            groups.append(members)
    return labels, groups


def _trace_outer_boundary(mask: np.ndarray) -> list[tuple[int, int]]:
    """Outer boundary of a cell mask as grid-corner vertices.

    Walks directed boundary edges (each separates a member cell from outside).
    A corner where two member cells touch diagonally carries two outgoing
    edges; preferring the sharpest right turn keeps the walk hugging the cell
    it came along, so hole loops and pinches never get crossed into. Collinear
    runs collapse to single segments.
    """
    gh, gw = mask.shape

    def inside(i, j):
        return 0 <= i < gh and 0 <= j < gw and mask[i, j]

    # corner (i, j) indexes the corner grid of shape (gh+1, gw+1)
    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for i in range(gh):
        for j in range(gw):
            if not mask[i, j]:
                continue
            if not inside(i - 1, j):
                edges.setdefault((i, j), []).append((i, j + 1))          # east
            if not inside(i, j + 1):
                edges.setdefault((i, j + 1), []).append((i + 1, j + 1))  # south
            if not inside(i + 1, j):
                edges.setdefault((i + 1, j + 1), []).append((i + 1, j))  # west
            if not inside(i, j - 1):
                edges.setdefault((i + 1, j), []).append((i, j))          # north

    start = min(edges)  # topmost-leftmost boundary corner lies on the outer loop
    loop = [start]
    prev, cur = start, edges[start][0]
    while cur != start:
        loop.append(cur)
        cands = edges[cur]
        if len(cands) == 1:
            prev, cur = cur, cands[0]
        else:
            di, dj = cur[0] - prev[0], cur[1] - prev[1]
            # priority: right turn, straight, left turn (never back the way we came)
            order = [(dj, -di), (di, dj), (-dj, di)]
            nxt = next((cur[0] + a, cur[1] + b) for a, b in order
                       if (cur[0] + a, cur[1] + b) in cands)
            prev, cur = cur, nxt
    out = []
    m = len(loop)
    for k in range(m):
        a, b, c = loop[k - 1], loop[k], loop[(k + 1) % m]
        if (b[0] - a[0], b[1] - a[1]) != (c[0] - b[0], c[1] - b[1]):
            out.append(b)
    return out


def _decompose_rectangles(mask: np.ndarray) -> list[tuple[int, int, int, int]]:
    """Greedy exact cover of the cell mask with axis-aligned rectangles.

    Returns (i0, j0, i1, j1) cell ranges, inclusive. Scan order is row-major,
    so output is deterministic.
    """
    gh, gw = mask.shape
    free = mask.copy()
    rects = []
    for i in range(gh):
        for j in range(gw):
            if not free[i, j]:
                continue
            j1 = j
            while j1 + 1 < gw and free[i, j1 + 1]:
                j1 += 1
            i1 = i
            while i1 + 1 < gh and free[i1 + 1, j : j1 + 1].all():
                i1 += 1
            free[i : i1 + 1, j : j1 + 1] = False
            rects.append((i, j, i1, j1))
    return rects


def _corner_ray_dirs(image: DepthImage, corners_ij: np.ndarray) -> np.ndarray:
    """World-frame ray directions through patch-grid corner pixel coordinates."""
    spec = image.spec
    p_rows = corners_ij[:, 0].astype(float)
    p_cols = corners_ij[:, 1].astype(float)
    tan_h = math.tan(math.radians(spec.fov_h_deg) / 2.0)
    tan_v = math.tan(math.radians(spec.fov_v_deg) / 2.0)
    x = (p_cols - spec.width / 2.0) / (spec.width / 2.0) * tan_h
    y = (p_rows - spec.height / 2.0) / (spec.height / 2.0) * tan_v
    dirs = np.stack([x, y, np.ones_like(x)], axis=-1)
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return dirs @ image.sensor_pose.rotation.T


def _project_corners(image: DepthImage, patch_px: int, corners: list[tuple[int, int]],
                     plane_point: np.ndarray, plane_normal: np.ndarray,
                     basis: np.ndarray) -> np.ndarray | None:
    """Intersect corner rays with the region plane; None on grazing geometry."""
    ij = np.asarray(corners, dtype=float) * patch_px
    dirs = _corner_ray_dirs(image, ij)
    o = image.sensor_pose.position
    denom = dirs @ plane_normal
    if np.any(np.abs(denom) < 1e-6):
        return None
    t = ((plane_point - o) @ plane_normal) / denom
    if np.any(t <= 0.0):
        return None
    pts = o + dirs * t[:, None]
    return (pts - plane_point) @ basis


def extract_regions(image: DepthImage, params: RegionParams | None = None) -> RegionExtraction:
    """Full pipeline for one frame. Deterministic for identical inputs."""
    params = params or RegionParams()
    t0 = time.perf_counter()

    blurred = blur_depth(image.depths)
    work = DepthImage(spec=image.spec, sensor_pose=image.sensor_pose,
                      timestamp=image.timestamp, depths=blurred)
    points = work.back_project()
    valid = work.valid_mask()
    points = np.where(valid[..., None], points, 0.0)

    centroid, normal, _rms, ok = _patch_planes(points, valid, params)
    labels, groups = _grow(centroid, normal, ok, params)

    gh, gw = labels.shape
    p = params.patch_px

    regions: list[PlanarRegion] = []
    discarded: dict[str, int] = {}
    out_labels = np.full((gh, gw), -1, dtype=int)

    def drop(reason: str) -> None:
        discarded[reason] = discarded.get(reason, 0) + 1

    for members in groups:
        if len(members) < params.min_patches:
            drop("too_few_patches")
            continue
        idx = tuple(np.array(members).T)
        cpts = centroid[idx]
        c, n, rms = fit_plane(cpts)
        d = cpts - c
        w = np.linalg.eigvalsh(d.T @ d)
        if w[2] <= 0.0 or w[1] < 1e-9 * w[2]:   # collinear centroid strip
            drop("degenerate_fit")
            continue
        basis = np.column_stack(plane_basis(n))

        mask = np.zeros((gh, gw), dtype=bool)
        mask[idx] = True
        hull_corners = _trace_outer_boundary(mask)
        hull = _project_corners(image, p, hull_corners, c, n, basis)
        if hull is None:
            drop("grazing_projection")
            continue
        polys = []
        for i0, j0, i1, j1 in _decompose_rectangles(mask):
            quad = _project_corners(image, p, [(i0, j0), (i0, j1 + 1),
                                               (i1 + 1, j1 + 1), (i1 + 1, j0)], c, n, basis)
            if quad is None:
                polys = []
                break
            polys.append(ensure_ccw(quad))
        if not polys:
            drop("grazing_projection")
            continue
        area = float(sum(polygon_area(q) for q in polys))
        if area < params.min_area:
            drop("below_min_area")
            continue
        rid = len(regions)
        out_labels[mask] = rid
        regions.append(PlanarRegion(
            region_id=rid, plane_point=c, plane_normal=n, basis=basis,
            concave_hull=ensure_ccw(hull), convex_polygons=tuple(polys),
            patch_count=len(members), area=area, fit_rms=float(rms)))

    dt = time.perf_counter() - t0
    return RegionExtraction(regions=tuple(regions), label_grid=out_labels,
                            patch_px=p, timestamp=image.timestamp, compute_s=dt,
                            discarded=discarded)


_PALETTE = np.array([
    [230, 80, 80], [80, 180, 80], [90, 120, 230], [220, 180, 60],
    [170, 90, 200], [80, 200, 200], [240, 130, 40], [150, 150, 90],
], dtype=np.uint8)


def write_regions_ppm(extraction: RegionExtraction, path) -> None:
    """Patch label map as a small binary PPM; unassigned patches are near-black."""
    lg = extraction.label_grid
    img = np.full(lg.shape + (3,), 20, dtype=np.uint8)
    assigned = lg >= 0
    img[assigned] = _PALETTE[lg[assigned] % len(_PALETTE)]
    with open(path, "wb") as f:
        f.write(f"P6\n{lg.shape[1]} {lg.shape[0]}\n255\n".encode("ascii"))
        f.write(img.tobytes())

"""Robot-centric height map, traversability, body-path search, corridor checks.

The map is the only navigation state that persists across perception cycles.
Lidar batches fold in through a per-cell high-percentile estimator that rises
immediately but decays slowly, so thin obstacles register while removed
terrain fades over a few scans instead of flickering with noise. Everything
downstream (traversability, A*, the corridor check) is a pure function of a
map snapshot.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, wrap_angle


class BodyPathError(RuntimeError):
    """Raised when no acceptable body path exists; str(err) is the reason."""


@dataclass(frozen=True)
class TraversabilityParams:
    max_step: float = 0.30          # max neighbor height delta before a cell scores 0
    max_slope_deg: float = 25.0     # window plane inclination before a cell scores 0
    max_roughness: float = 0.05     # RMS plane residual before a cell scores 0
    body_radius: float = 0.15       # half-size of the footprint window
    min_observed_fraction: float = 0.5


@dataclass(frozen=True)
class BodyPathParams:
    w_trav: float = 3.0             # cost multiplier weight on (1 - traversability)
    trav_cutoff: float = 0.05       # below this a cell is an obstacle
    snap_radius: float = 0.5        # start/goal snap to nearest traversable cell
    waypoint_spacing: float = 0.10
    yaw_blend_dist: float = 0.5     # tail arc over which heading eases into goal yaw
    allow_unknown_goal: bool = True
    unknown_goal_trav: float = 0.35  # score granted to unobserved cells near the goal
    trav: TraversabilityParams = field(default_factory=TraversabilityParams)


class HeightMap:
    """Fixed-extent 2.5D grid, row-major [iy, ix], cell centers at origin + (i+0.5)*res."""

    def __init__(self, bounds: tuple[float, float, float, float], resolution: float = 0.05):
        x0, y0, x1, y1 = bounds
        if not (x1 > x0 and y1 > y0):
            raise ValueError("empty bounds")
        self.resolution = float(resolution)
        self.origin = (float(x0), float(y0))
        self.nx = max(2, int(math.ceil((x1 - x0) / resolution)))
        self.ny = max(2, int(math.ceil((y1 - y0) / resolution)))
        self.heights = np.full((self.ny, self.nx), np.nan)
        self.observed = np.zeros((self.ny, self.nx), dtype=bool)
        self.filled = np.zeros((self.ny, self.nx), dtype=bool)
        self.updated_at = 0.0
        self.points_ignored = 0
        self._trav_cache: tuple[TraversabilityParams, np.ndarray] | None = None

    # -- indexing ----------------------------------------------------------

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin[0]) / self.resolution))
        iy = int(math.floor((y - self.origin[1]) / self.resolution))
        return ix, iy

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (self.origin[0] + (ix + 0.5) * self.resolution,
                self.origin[1] + (iy + 0.5) * self.resolution)

    def in_grid(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.nx and 0 <= iy < self.ny

    def height_at(self, x: float, y: float, default: float = math.nan) -> float:
        ix, iy = self.world_to_cell(x, y)
        if not self.in_grid(ix, iy):
            return default
        h = self.heights[iy, ix]
        return default if math.isnan(h) else float(h)

    # -- updates -----------------------------------------------------------

    def update_from_points(self, points: np.ndarray, timestamp: float = 0.0,
                           decay: float = 0.3) -> int:
        """Fold one point batch in. Returns the number of cells touched.

        Per cell the batch reduces to its 95th-percentile z (order statistic,
        no interpolation), a max-like estimator that keeps thin obstacles but
        trims stray high outliers. The stored height rises immediately and
        only decays down, so removed terrain clears within a few scans.
        Permuting the points within one batch cannot change the result.
        """
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            return 0
        ix = np.floor((pts[:, 0] - self.origin[0]) / self.resolution).astype(int)
        iy = np.floor((pts[:, 1] - self.origin[1]) / self.resolution).astype(int)
        keep = (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny)
        self.points_ignored += int((~keep).sum())
        if not keep.any():
            return 0
        flat = iy[keep] * self.nx + ix[keep]
        z = pts[keep, 2]
        order = np.lexsort((z, flat))
        flat, z = flat[order], z[order]
        cell_ids, starts = np.unique(flat, return_index=True)
        ends = np.append(starts[1:], len(z))
        # index of the 95th percentile within each sorted run ('higher' method)
        pick = starts + np.ceil(0.95 * (ends - starts - 1)).astype(int)
        est = z[pick]

        hy, hx = cell_ids // self.nx, cell_ids % self.nx
        old = self.heights[hy, hx]
        fresh = np.isnan(old)
        rising = ~fresh & (est >= old)
        new = np.where(fresh | rising, est, old + decay * (est - old))
        self.heights[hy, hx] = new
        self.observed[hy, hx] = True
        self.filled[hy, hx] = False
        self.updated_at = timestamp
        self._trav_cache = None
        return len(cell_ids)

    def fill_holes(self, passes: int = 3, min_neighbors: int = 5) -> int:
        """Bridge small unobserved gaps with the median of observed neighbors.

        Single-pose lidar leaves radial gaps between rings; this closes them
        without inventing terrain across wide shadows.
        """
        total = 0
        for _ in range(passes):
            h = np.pad(self.heights, 1, constant_values=np.nan)
            stack = np.stack([h[1 + dy : 1 + dy + self.ny, 1 + dx : 1 + dx + self.nx]
                              for dy in (-1, 0, 1) for dx in (-1, 0, 1)
                              if (dy, dx) != (0, 0)])
            counts = np.sum(~np.isnan(stack), axis=0)
            cand = np.isnan(self.heights) & (counts >= min_neighbors)
            if not cand.any():
                break
            med = np.nanmedian(stack[:, cand], axis=0)
            self.heights[cand] = med
            self.observed[cand] = True
            self.filled[cand] = True
            total += int(cand.sum())
        if total:
            self._trav_cache = None
        return total

    def seed_disk(self, x: float, y: float, radius: float, z: float) -> int:
        """Stamp a known ground level onto unobserved cells within a disk.

        Bootstraps the sensing blind zone around the robot from its own foot
        contacts; never overwrites cells the lidar has actually measured.
        """
        yy, xx = np.mgrid[0 : self.ny, 0 : self.nx]
        cx = self.origin[0] + (xx + 0.5) * self.resolution
        cy = self.origin[1] + (yy + 0.5) * self.resolution
        mask = ((cx - x) ** 2 + (cy - y) ** 2 <= radius * radius) & ~self.observed
        self.heights[mask] = z
        self.observed[mask] = True
        self.filled[mask] = True
        if mask.any():
            self._trav_cache = None
        return int(mask.sum())

    # -- traversability ----------------------------------------------------

    def traversability(self, params: TraversabilityParams | None = None) -> np.ndarray:
        params = params or TraversabilityParams()
        if self._trav_cache is not None and self._trav_cache[0] == params:
            return self._trav_cache[1]
        trav = self._compute_traversability(params)
        self._trav_cache = (params, trav)
        return trav

    def _window_view(self, arr: np.ndarray, half: int) -> np.ndarray:
        p = np.pad(arr, half, constant_values=np.nan)
        w = np.lib.stride_tricks.sliding_window_view(p, (2 * half + 1, 2 * half + 1))
        return w.reshape(self.ny, self.nx, -1)

    def _compute_traversability(self, params: TraversabilityParams) -> np.ndarray:
        """Product of step, slope, and roughness penalties over a body window.

        Each cell fits a least-squares plane to the observed heights inside
        its footprint window; slope is the plane inclination, roughness the
        RMS residual, step the largest height delta between adjacent observed
        cells in the window. Any penalty reaching its limit zeroes the cell,
        as do cells that are unobserved or mostly surrounded by unknowns.
        """
        h = self.heights
        res = self.resolution
        half = max(1, int(round(params.body_radius / res)))
        k = 2 * half + 1

        # local step: worst 8-neighbor delta at each cell (observed pairs only)
        pad = np.pad(h, 1, constant_values=np.nan)
        shifts = [pad[1 + dy : 1 + dy + self.ny, 1 + dx : 1 + dx + self.nx]
                  for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
        # all-NaN windows are legal here (unknown cells); their reductions are
        # replaced below, so the nan-reduction warnings carry no information
        with np.errstate(invalid="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            diffs = np.stack([np.abs(h - s) for s in shifts])
            local_step = np.where(np.all(np.isnan(diffs), axis=0),
                                  0.0, np.nanmax(diffs, axis=0))
            local_step = np.where(np.isnan(h), np.nan, local_step)
            step = np.nanmax(self._window_view(local_step, half), axis=-1)
            step = np.where(np.isnan(step), 0.0, step)

        # least-squares plane z = a*x + b*y + c over each window, fit on the
        # cells near the window's median height: a stair inside the window
        # then reads as its majority plateau, not as a phantom steep ramp
        # (the step term already prices the stair itself)
        win = self._window_view(h, half)
        observed = ~np.isnan(win)
        frac = observed.mean(axis=-1)
        with np.errstate(invalid="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            med = np.nanmedian(win, axis=-1, keepdims=True)
            valid = observed & (np.abs(win - med) <= params.max_roughness)
        z = np.where(valid, win, 0.0)
        off = (np.arange(k) - half) * res
        xo = np.tile(off, k)
        yo = np.repeat(off, k)

        n = valid.sum(axis=-1).astype(float)
        sx = (valid * xo).sum(axis=-1)
        sy = (valid * yo).sum(axis=-1)
        sxx = (valid * xo * xo).sum(axis=-1)
        syy = (valid * yo * yo).sum(axis=-1)
        sxy = (valid * xo * yo).sum(axis=-1)
        sz = z.sum(axis=-1)
        sxz = (z * xo).sum(axis=-1)
        syz = (z * yo).sum(axis=-1)

        A = np.stack([np.stack([sxx, sxy, sx], axis=-1),
                      np.stack([sxy, syy, sy], axis=-1),
                      np.stack([sx, sy, n], axis=-1)], axis=-2)
        A = A + np.eye(3) * 1e-9  # ridge keeps near-degenerate windows solvable
        rhs = np.stack([sxz, syz, sz], axis=-1)
        coef = np.linalg.solve(A, rhs[..., None])[..., 0]
        a, b, c = coef[..., 0], coef[..., 1], coef[..., 2]

        pred = (a[..., None] * xo + b[..., None] * yo + c[..., None])
        resid2 = np.where(valid, (z - pred) ** 2, 0.0)
        rms = np.sqrt(resid2.sum(axis=-1) / np.maximum(n, 1.0))
        incline = np.arctan(np.hypot(a, b))

        # quadratic step penalty: a stair near the limit is expensive but
        # crossable, only at the limit itself does the cell become a wall
        p_step = np.clip(1.0 - (step / params.max_step) ** 2, 0.0, 1.0)
        p_slope = np.clip(1.0 - incline / math.radians(params.max_slope_deg), 0.0, 1.0)
        p_rough = np.clip(1.0 - rms / params.max_roughness, 0.0, 1.0)

        usable = self.observed & (frac >= params.min_observed_fraction)
        return np.where(usable, p_step * p_slope * p_rough, 0.0)

    def snapshot(self) -> dict:
        """Wire-friendly form; heights in integer millimeters, None for unknown."""
        mm = np.where(np.isnan(self.heights), -32768,
                      np.round(self.heights * 1000.0)).astype(int)
        return {
            "origin": [self.origin[0], self.origin[1]],
            "resolution": self.resolution,
            "shape": [self.ny, self.nx],
            "updated_at": self.updated_at,
            "heights_mm": mm.ravel().tolist(),
        }


# -- body path ---------------------------------------------------------------


@dataclass(frozen=True)
class BodyPath:
    points: np.ndarray              # (N, 2)
    yaws: np.ndarray                # (N,)
    arclengths: np.ndarray          # (N,) cumulative, starts at 0
    goal: Pose2
    min_trav: float

    @property
    def length(self) -> float:
        return float(self.arclengths[-1])

    def pose_at(self, s: float) -> Pose2:
        s = min(max(s, 0.0), self.length)
        x = float(np.interp(s, self.arclengths, self.points[:, 0]))
        y = float(np.interp(s, self.arclengths, self.points[:, 1]))
        i = int(np.searchsorted(self.arclengths, s, side="right")) - 1
        i = min(max(i, 0), len(self.yaws) - 2)
        t = ((s - self.arclengths[i]) / (self.arclengths[i + 1] - self.arclengths[i])
             if self.arclengths[i + 1] > self.arclengths[i] else 0.0)
        yaw = self.yaws[i] + t * wrap_angle(self.yaws[i + 1] - self.yaws[i])
        return Pose2(x, y, wrap_angle(yaw))

    def curvature_at(self, s: float, ds: float = 0.2) -> float:
        a = self.pose_at(max(0.0, s - ds / 2.0))
        b = self.pose_at(min(self.length, s + ds / 2.0))
        span = max(1e-6, min(self.length, s + ds / 2.0) - max(0.0, s - ds / 2.0))
        return abs(wrap_angle(b.yaw - a.yaw)) / span

    def project(self, x: float, y: float) -> float:
        """Arclength of the closest point on the polyline."""
        p = np.array([x, y])
        a = self.points[:-1]
        b = self.points[1:]
        ab = b - a
        denom = np.maximum((ab * ab).sum(axis=1), 1e-12)
        t = np.clip(((p - a) * ab).sum(axis=1) / denom, 0.0, 1.0)
        proj = a + ab * t[:, None]
        d2 = ((proj - p) ** 2).sum(axis=1)
        i = int(np.argmin(d2))
        seg = self.arclengths[i + 1] - self.arclengths[i]
        return float(self.arclengths[i] + t[i] * seg)

    def to_message(self) -> dict:
        return {
            "points": [[round(float(x), 4), round(float(y), 4)] for x, y in self.points],
            "yaws": [round(float(y), 4) for y in self.yaws],
            "length": round(self.length, 4),
            "goal": [self.goal.x, self.goal.y, self.goal.yaw],
        }


def _snap_cell(trav: np.ndarray, hm: HeightMap, x: float, y: float,
               params: BodyPathParams, label: str) -> tuple[int, int]:
    ix, iy = hm.world_to_cell(x, y)
    if hm.in_grid(ix, iy) and trav[iy, ix] >= params.trav_cutoff:
        return ix, iy
    r_cells = int(math.ceil(params.snap_radius / hm.resolution))
    best, best_d = None, math.inf
    for dy in range(-r_cells, r_cells + 1):
        for dx in range(-r_cells, r_cells + 1):
            a, b = ix + dx, iy + dy
            if not hm.in_grid(a, b) or trav[b, a] < params.trav_cutoff:
                continue
            d = dx * dx + dy * dy
            if d < best_d:
                best, best_d = (a, b), d
    if best is None or math.sqrt(best_d) * hm.resolution > params.snap_radius:
        raise BodyPathError(f"{label} position is not traversable")
    return best


_NEIGHBORS = [(dx, dy, math.hypot(dx, dy))
              for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)]


def _planning_grid(hm: HeightMap, goal: Pose2, params: BodyPathParams) -> np.ndarray:
    """Traversability with the goal-disk exception for unobserved cells."""
    trav = hm.traversability(params.trav)
    if not params.allow_unknown_goal:
        return trav
    gx, gy = hm.world_to_cell(goal.x, goal.y)
    r = int(math.ceil(params.snap_radius / hm.resolution))
    y0, y1 = max(0, gy - r), min(hm.ny, gy + r + 1)
    x0, x1 = max(0, gx - r), min(hm.nx, gx + r + 1)
    patch = ~hm.observed[y0:y1, x0:x1]
    if not patch.any():
        return trav
    trav = trav.copy()
    sub = trav[y0:y1, x0:x1]
    trav[y0:y1, x0:x1] = np.where(patch, np.maximum(sub, params.unknown_goal_trav), sub)
    return trav


def _astar_cells(trav: np.ndarray, resolution: float,
                 s_cell: tuple[int, int], g_cell: tuple[int, int],
                 params: BodyPathParams) -> tuple[list[tuple[int, int]], float]:
    """Grid A* from s_cell to g_cell; returns (cells, cost of the last cell).

    Edge cost is euclidean distance scaled by (1 + w * (1 - trav)), so the
    euclidean heuristic stays admissible and flat detours beat rough lines.
    """
    ny, nx = trav.shape
    open_heap = [(0.0, 0, s_cell)]
    g_cost = {s_cell: 0.0}
    came: dict[tuple[int, int], tuple[int, int]] = {}
    counter = 1
    gx, gy = g_cell
    found = False
    while open_heap:
        _, _, cur = heapq.heappop(open_heap)
        if cur == g_cell:
            found = True
            break
        cx, cy = cur
        base = g_cost[cur]
        for dx, dy, step_len in _NEIGHBORS:
            nx_, ny_ = cx + dx, cy + dy
            if not (0 <= nx_ < nx and 0 <= ny_ < ny):
                continue
            t = trav[ny_, nx_]
            if t < params.trav_cutoff:
                continue
            # a diagonal move must not clip a blocked corner cell
            if dx != 0 and dy != 0 and (trav[cy, nx_] < params.trav_cutoff
                                        or trav[ny_, cx] < params.trav_cutoff):
                continue
            nxt = (nx_, ny_)
            cost = base + step_len * resolution * (1.0 + params.w_trav * (1.0 - t))
            if cost < g_cost.get(nxt, math.inf) - 1e-12:
                g_cost[nxt] = cost
                came[nxt] = cur
                h = math.hypot(nx_ - gx, ny_ - gy) * resolution
                heapq.heappush(open_heap, (cost + h, counter, nxt))
                counter += 1
    if not found:
        raise BodyPathError(
            f"no traversable route to the goal (explored {len(g_cost)} cells)")
    cells = [g_cell]
    while cells[-1] != s_cell:
        cells.append(came[cells[-1]])
    cells.reverse()
    return cells, g_cost[g_cell]


def plan_body_path(hm: HeightMap, start: Pose2, goal: Pose2,
                   params: BodyPathParams | None = None) -> BodyPath:
    """A* over the traversability grid, then shortcut smoothing and resampling.

    Unobserved cells score zero and are never entered, except optionally in
    a small disk around the goal.
    """
    params = params or BodyPathParams()
    trav = _planning_grid(hm, goal, params)

    s_cell = _snap_cell(trav, hm, start.x, start.y, params, "start")
    g_cell = _snap_cell(trav, hm, goal.x, goal.y, params, "goal")
    cells, _cost = _astar_cells(trav, hm.resolution, s_cell, g_cell, params)
    pts = [np.array([start.x, start.y])]
    pts += [np.array(hm.cell_center(ix, iy)) for ix, iy in cells]
    pts.append(np.array([goal.x, goal.y]))
    pts = np.array(pts)

    pts = _shortcut(pts, trav, hm, params)
    pts = _resample(pts, params.waypoint_spacing)
    yaws = _path_yaws(pts, goal, params.yaw_blend_dist)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arcs = np.concatenate([[0.0], np.cumsum(seg)])
    min_trav = _line_min_trav(pts, trav, hm)
    return BodyPath(points=pts, yaws=yaws, arclengths=arcs, goal=goal, min_trav=min_trav)


def smooth_path(path: BodyPath, hm: HeightMap,
                params: BodyPathParams | None = None) -> BodyPath:
    """Shortcut an existing path without lowering its worst cell score.

    Endpoints are fixed; length never grows. Planning already smooths, so
    this mainly serves re-smoothing a path against an updated map.
    """
    params = params or BodyPathParams()
    trav = _planning_grid(hm, path.goal, params)
    pts = _shortcut(path.points.copy(), trav, hm, params)
    pts = _resample(pts, params.waypoint_spacing)
    yaws = _path_yaws(pts, path.goal, params.yaw_blend_dist)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arcs = np.concatenate([[0.0], np.cumsum(seg)])
    return BodyPath(points=pts, yaws=yaws, arclengths=arcs, goal=path.goal,
                    min_trav=_line_min_trav(pts, trav, hm))


def _line_min_trav(pts: np.ndarray, trav: np.ndarray, hm: HeightMap) -> float:
    """Worst traversability along a polyline, sampled at half-cell spacing."""
    samples = []
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(2, int(math.ceil(np.linalg.norm(b - a) / (hm.resolution / 2.0))) + 1)
        t = np.linspace(0.0, 1.0, n)[:, None]
        samples.append(a + t * (b - a))
    s = np.vstack(samples)
    ix = np.floor((s[:, 0] - hm.origin[0]) / hm.resolution).astype(int)
    iy = np.floor((s[:, 1] - hm.origin[1]) / hm.resolution).astype(int)
    inside = (ix >= 0) & (ix < hm.nx) & (iy >= 0) & (iy < hm.ny)
    if not inside.all():
        return 0.0
    return float(trav[iy, ix].min())


def _shortcut(pts: np.ndarray, trav: np.ndarray, hm: HeightMap,
              params: BodyPathParams) -> np.ndarray:
    """Greedy line-of-sight shortcutting that never lowers the worst visited cell."""
    seg_mins = np.array([_line_min_trav(pts[k : k + 2], trav, hm)
                         for k in range(len(pts) - 1)])
    out = [pts[0]]
    i = 0
    n = len(pts)
    while i < n - 1:
        advanced = False
        for j in range(n - 1, i + 1, -1):
            seg_min = _line_min_trav(pts[[i, j]], trav, hm)
            if seg_min < params.trav_cutoff:
                continue
            if seg_min >= float(seg_mins[i:j].min()) - 1e-9:
                out.append(pts[j])
                i = j
                advanced = True
                break
        if not advanced:
            out.append(pts[i + 1])
            i += 1
    return np.array(out)


def _resample(pts: np.ndarray, spacing: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 1e-9])
    pts = pts[keep]
    if len(pts) < 2:
        pts = np.vstack([pts, pts[-1] + 1e-6])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arcs = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(2, int(math.ceil(arcs[-1] / spacing)) + 1)
    s_new = np.linspace(0.0, arcs[-1], n)
    x = np.interp(s_new, arcs, pts[:, 0])
    y = np.interp(s_new, arcs, pts[:, 1])
    return np.stack([x, y], axis=1)


def _path_yaws(pts: np.ndarray, goal: Pose2, blend_dist: float) -> np.ndarray:
    d = np.diff(pts, axis=0)
    tang = np.arctan2(d[:, 1], d[:, 0])
    yaws = np.concatenate([tang, [tang[-1]]])
    # unwrap so interpolation between waypoints never takes the long way round
    yaws = np.unwrap(yaws)
    seg = np.linalg.norm(d, axis=1)
    arcs = np.concatenate([[0.0], np.cumsum(seg)])
    total = arcs[-1]
    target = yaws[-1] + wrap_angle(goal.yaw - yaws[-1])
    blend = (arcs >= total - blend_dist) if total > blend_dist else np.ones_like(arcs, bool)
    w = np.zeros_like(arcs)
    if total > blend_dist:
        w[blend] = (arcs[blend] - (total - blend_dist)) / blend_dist
    else:
        w[:] = np.linspace(0.0, 1.0, len(arcs))
    yaws = yaws * (1.0 - w) + target * w
    return np.array([wrap_angle(v) for v in yaws])


# -- corridor obstruction ----------------------------------------------------


@dataclass(frozen=True)
class ImpassibilityParams:
    corridor_halfwidth: float = 0.4
    lookahead: float = 1.5
    z_low: float = 0.5
    z_high: float = 2.0
    cluster_radius: float = 0.5
    min_points: int = 50


@dataclass(frozen=True)
class ImpassibilityResult:
    blocked: bool
    count: int
    center: tuple[float, float] | None


def check_impassibility(points: np.ndarray, path: BodyPath, progress_s: float,
                        hm: HeightMap, ground_z_default: float = 0.0,
                        params: ImpassibilityParams | None = None) -> ImpassibilityResult:
    """Is the corridor ahead blocked by something tall enough to be a body?

    Pure function of one point cloud. Counts points hovering well above the
    local height map inside the corridor; one dense cluster means a standing
    obstruction rather than sensor speckle.
    """
    params = params or ImpassibilityParams()
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return ImpassibilityResult(False, 0, None)

    s0 = min(progress_s, path.length)
    s1 = min(s0 + params.lookahead, path.length)
    n_samp = max(2, int(math.ceil((s1 - s0) / 0.1)) + 1)
    samples = np.array([[path.pose_at(s).x, path.pose_at(s).y]
                        for s in np.linspace(s0, s1, n_samp)])

    d2 = ((pts[:, None, :2] - samples[None, :, :]) ** 2).sum(axis=2).min(axis=1)
    near = d2 <= params.corridor_halfwidth ** 2
    if not near.any():
        return ImpassibilityResult(False, 0, None)
    cand = pts[near]
    ground = np.array([hm.height_at(x, y, default=ground_z_default) for x, y in cand[:, :2]])
    above = cand[:, 2] - ground
    cand = cand[(above >= params.z_low) & (above <= params.z_high)]
    if len(cand) < params.min_points:
        return ImpassibilityResult(False, int(len(cand)), None)

    if len(cand) > 3000:  # bound the pairwise matrix; stride keeps it deterministic
        cand = cand[:: len(cand) // 3000 + 1]
    xy = cand[:, :2]
    dd = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2)
    counts = (dd <= params.cluster_radius ** 2).sum(axis=1)
    best = int(np.argmax(counts))
    if counts[best] < params.min_points:
        return ImpassibilityResult(False, int(counts[best]), None)
    members = xy[dd[best] <= params.cluster_radius ** 2]
    c = members.mean(axis=0)
    return ImpassibilityResult(True, int(counts[best]), (float(c[0]), float(c[1])))

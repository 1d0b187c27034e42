"""Footstep search over planar regions.

A* on an (x, y, yaw) lattice anchored to the support foot. Each node keeps the
last two foot placements because the goal test runs on the mid-feet pose; the
lattice quantization makes revisit detection exact. Candidate footholds snap
onto extracted regions by clipped sole area, transitions are validated against
the support foot, and every rejection is counted under the reason vocabulary
(step too high, minimum foothold amount, too close to cliff, surface too
inclined, foot collision, outside reach box).

Planning effort is budgeted in expansions derived from the caller's timeout so
results stay reproducible; a wall-clock guard backs that up at 1.5x timeout.

Plan log text format, version 1 (written by write_plan_log):

    # footstep-plan-log v1
    # params: key=value ... (sorted)
    # inputs: digest=<crc32> regions=<n> stance_left=(..) stance_right=(..)
    #         subgoal=(x y yaw) first_side=<side>
    # result: status=<full|partial|failed> steps=<n> expanded=<n> cost=<g>
    # rejections: reason: count; ...
    # columns: id parent side x y z yaw status detail
    <records, one per line; status is root|ok|rejected>
"""

from __future__ import annotations

import heapq
import math
import time
import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import (Pose2, clip_polygon_convex, convex_hull, polygon_area,
                       polygon_outline_distance, polygons_overlap,
                       rectangle_corners, rot2, wrap_angle)

LEFT, RIGHT = "left", "right"

STATUS_FULL = "full"
STATUS_PARTIAL = "partial"
STATUS_FAILED = "failed"

REJECT_STEP_HEIGHT = "step too high"
REJECT_FOOTHOLD = "minimum foothold amount"
REJECT_CLIFF = "too close to cliff"
REJECT_COLLISION = "foot collision"
REJECT_INCLINE = "surface too inclined"
REJECT_REACH = "outside reach box"

PLAN_LOG_VERSION = 1

_EXPANSIONS_PER_SECOND = 1600  # deterministic effort budget per second of timeout
_YAW_BINS = 24
_AREA_TIE = 1e-9   # clipped areas this close count as a tie between regions
_Z_TIE = 0.03      # snapped heights this close count as the same surface


@dataclass(frozen=True)
class PlannerParams:
    grid_xy: float = 0.05
    grid_yaw_deg: float = 15.0
    reach_fwd_min: float = -0.15
    reach_fwd_max: float = 0.35
    reach_lat_min: float = 0.15
    reach_lat_max: float = 0.40
    max_foot_yaw_deg: float = 22.5      # between the two feet
    max_step_up: float = 0.30
    max_step_down: float = 0.30
    max_surface_incline_deg: float = 35.0
    min_foothold_fraction: float = 0.4
    nominal_step: float = 0.25
    stance_width: float = 0.25
    sole_length: float = 0.26
    sole_width: float = 0.13
    cliff_min_height: float = 0.31
    cliff_clearance: float = 0.05
    goal_xy_tol: float = 0.10
    goal_yaw_tol: float = 0.25
    cost_per_step: float = 0.25
    w_dist: float = 1.0
    w_yaw: float = 0.3
    w_area: float = 0.2
    timeout_s: float = 0.6
    min_full_steps: int = 3

    def __post_init__(self):
        if self.reach_lat_min <= self.sole_width / 2.0:
            raise ValueError("lateral reach would overlap the stance sole")
        if not (0.0 < self.min_foothold_fraction <= 1.0):
            raise ValueError("min_foothold_fraction out of range")
        if self.grid_yaw_deg > self.max_foot_yaw_deg:
            raise ValueError("yaw branch exceeds the feet yaw limit")

    def replace(self, **changes) -> "PlannerParams":
        from dataclasses import replace as _replace
        return _replace(self, **changes)


@dataclass(frozen=True)
class Footstep:
    side: str
    x: float
    y: float
    z: float
    yaw: float
    region_id: int = -1
    foothold_fraction: float = 1.0
    # clipped support polygon in the sole frame; None means the full sole
    foothold: tuple[tuple[float, float], ...] | None = None
    square_up: bool = False

    def pose2(self) -> Pose2:
        return Pose2(self.x, self.y, self.yaw)

    def sole_polygon(self, params: PlannerParams) -> np.ndarray:
        return rectangle_corners(self.x, self.y, self.yaw,
                                 params.sole_length / 2.0, params.sole_width / 2.0)

    def foothold_world(self, params: PlannerParams) -> np.ndarray:
        if self.foothold is None:
            return self.sole_polygon(params)
        local = np.asarray(self.foothold, dtype=float)
        return local @ rot2(self.yaw).T + np.array([self.x, self.y])

    def to_message(self) -> dict:
        msg = {"side": self.side, "x": round(self.x, 4), "y": round(self.y, 4),
               "z": round(self.z, 4), "yaw": round(self.yaw, 4),
               "region_id": self.region_id,
               "foothold_fraction": round(self.foothold_fraction, 3),
               "square_up": self.square_up}
        if self.foothold is not None:
            msg["foothold"] = [[round(u, 4), round(v, 4)] for u, v in self.foothold]
        return msg


@dataclass(frozen=True)
class StanceState:
    left: Footstep
    right: Footstep
    support: str = "both"  # both|left|right

    def foot(self, side: str) -> Footstep:
        return self.left if side == LEFT else self.right

    def mid_pose(self) -> Pose2:
        yaw = self.left.yaw + 0.5 * wrap_angle(self.right.yaw - self.left.yaw)
        return Pose2((self.left.x + self.right.x) / 2.0,
                     (self.left.y + self.right.y) / 2.0, wrap_angle(yaw))

    def mid_z(self) -> float:
        return (self.left.z + self.right.z) / 2.0


@dataclass(frozen=True)
class FootstepPlan:
    steps: tuple[Footstep, ...]
    status: str                     # full | partial | failed
    subgoal: Pose2
    expanded: int
    duration_s: float
    cost: float = 0.0               # accumulated g of the returned branch
    rejections: dict[str, int] = field(default_factory=dict)
    first_side: str = LEFT
    inputs_digest: str = ""
    log_records: tuple = ()
    params: PlannerParams | None = None

    @property
    def full(self) -> bool:
        return self.status == STATUS_FULL

    @property
    def failed(self) -> bool:
        return self.status == STATUS_FAILED

    def to_message(self) -> dict:
        return {"steps": [s.to_message() for s in self.steps], "status": self.status,
                "subgoal": [self.subgoal.x, self.subgoal.y, self.subgoal.yaw],
                "expanded": self.expanded, "duration_s": round(self.duration_s, 4),
                "cost": round(self.cost, 6), "rejections": dict(self.rejections)}


@dataclass(frozen=True)
class SnapResult:
    reason: str | None
    z: float = 0.0
    region_id: int = -1
    fraction: float = 0.0
    foothold_world: np.ndarray | None = None
    region: object = None

    @property
    def ok(self) -> bool:
        return self.reason is None


def other_side(side: str) -> str:
    return RIGHT if side == LEFT else LEFT


def _side_sign(side: str) -> float:
    return 1.0 if side == LEFT else -1.0


class _RegionIndex:
    """Per-call view of the regions: xy polygons, bboxes, incline, hull cache.

    Everything the snap and cliff probes touch per candidate is flattened to
    plain floats up front; these two run hundreds of thousands of times per
    plan and numpy overhead on 4-vertex polygons dominates otherwise.
    """

    def __init__(self, regions, params: PlannerParams):
        self.params = params
        self.half_l = params.sole_length / 2.0
        self.half_w = params.sole_width / 2.0
        self.sole_area = params.sole_length * params.sole_width
        self.max_incline = math.radians(params.max_surface_incline_deg)
        self.entries = []
        for r in regions:
            polys = r.convex_world_xy()
            if not polys:
                continue
            pts = [p.tolist() for p in polys]
            boxes = [(min(v[0] for v in p), min(v[1] for v in p),
                      max(v[0] for v in p), max(v[1] for v in p)) for p in pts]
            incline = math.acos(min(1.0, max(-1.0, float(r.plane_normal[2]))))
            p0 = r.plane_point
            n = r.plane_normal
            plane = (float(p0[0]), float(p0[1]), float(p0[2]),
                     float(n[0]), float(n[1]), float(n[2]))
            self.entries.append((r, pts, boxes, incline, r.hull_world_xy(), plane))

    def _sole_pts(self, x, y, yaw, half_l, half_w):
        c, s = math.cos(yaw), math.sin(yaw)
        lc, ws = half_l * c, half_w * s
        ls, wc = half_l * s, half_w * c
        return [(x + lc - ws, y + ls + wc), (x - lc - ws, y - ls + wc),
                (x - lc + ws, y - ls - wc), (x + lc + ws, y + ls - wc)]

    def snap(self, x: float, y: float, yaw: float) -> SnapResult:
        """Project a sole at (x, y, yaw) onto the best-supporting region.

        Best = largest clipped area; area ties go to the higher surface, and
        surfaces within _Z_TIE keep the earlier (lower-id) region.
        """
        sole = self._sole_pts(x, y, yaw, self.half_l, self.half_w)
        xs = [p[0] for p in sole]
        ys = [p[1] for p in sole]
        bx0, bx1 = min(xs), max(xs)
        by0, by1 = min(ys), max(ys)
        sole_area = self.sole_area
        full = sole_area - 1e-12
        best = None  # (area, z, region, pieces, incline)
        for r, polys, boxes, incline, _hull, plane in self.entries:
            nz = plane[5]
            if nz < 1e-9:
                continue  # vertical plane, no height below the sole
            covered = 0.0
            pieces = None
            for poly, (px0, py0, px1, py1) in zip(polys, boxes):
                if px1 < bx0 or px0 > bx1 or py1 < by0 or py0 > by1:
                    continue
                clipped = clip_polygon_convex(sole, poly)
                if len(clipped) >= 3:
                    covered += polygon_area(clipped)
                    if pieces is None:
                        pieces = [clipped]
                    else:
                        pieces.append(clipped)
                    if covered >= full:
                        break
            if covered <= 0.0:
                continue
            z = plane[2] - ((x - plane[0]) * plane[3] + (y - plane[1]) * plane[4]) / nz
            if best is None or covered > best[0] + _AREA_TIE or \
               (covered >= best[0] - _AREA_TIE and z > best[1] + _Z_TIE):
                best = (covered, z, r, pieces, incline)
        if best is None:
            return SnapResult(REJECT_FOOTHOLD)
        covered, z, region, pieces, incline = best
        fraction = min(1.0, covered / sole_area)
        if fraction < self.params.min_foothold_fraction:
            return SnapResult(REJECT_FOOTHOLD, fraction=fraction)
        if incline > self.max_incline:
            return SnapResult(REJECT_INCLINE, fraction=fraction)
        if len(pieces) == 1:
            foothold = np.asarray(pieces[0])  # one convex clip, already a hull
        else:
            foothold = convex_hull(np.vstack(pieces))
        return SnapResult(None, z=float(z), region_id=region.region_id,
                          fraction=fraction, foothold_world=foothold, region=region)

    def cliff_conflict(self, x: float, y: float, yaw: float, z0: float) -> bool:
        """Any markedly higher surface within clearance of the sole outline."""
        clear = self.params.cliff_clearance
        inflated = self._sole_pts(x, y, yaw, self.half_l + clear, self.half_w + clear)
        xs = [p[0] for p in inflated]
        ys = [p[1] for p in inflated]
        bx0, bx1 = min(xs), max(xs)
        by0, by1 = min(ys), max(ys)
        limit = z0 + self.params.cliff_min_height
        for _r, polys, boxes, _incline, _hull, plane in self.entries:
            p0x, p0y, p0z, nx, ny, nz = plane
            if nz < 1e-9:
                continue
            # plane z can only beat the limit somewhere over the overlap if it
            # does at the clipped piece's extremes; probe centroid and corners
            for poly, (px0, py0, px1, py1) in zip(polys, boxes):
                if px1 < bx0 or px0 > bx1 or py1 < by0 or py0 > by1:
                    continue
                clipped = clip_polygon_convex(poly, inflated)
                if len(clipped) < 3:
                    continue
                clipped = clipped.tolist()
                m = len(clipped)
                cx = sum(p[0] for p in clipped) / m
                cy = sum(p[1] for p in clipped) / m
                zm = p0z - ((cx - p0x) * nx + (cy - p0y) * ny) / nz
                if zm >= limit:
                    return True
                for px, py in clipped:
                    if p0z - ((px - p0x) * nx + (py - p0y) * ny) / nz >= limit:
                        return True
        return False

    def hull_of(self, region_id: int) -> np.ndarray | None:
        for e in self.entries:
            if e[0].region_id == region_id:
                return e[4]
        return None


def _as_index(regions, params: PlannerParams) -> _RegionIndex:
    if isinstance(regions, _RegionIndex):
        return regions
    return _RegionIndex(tuple(regions), params)


def snap_to_regions(x: float, y: float, yaw: float, regions,
                    params: PlannerParams | None = None) -> SnapResult:
    """Snap a candidate sole pose onto the extracted regions.

    Returns the supporting surface (z, region, clipped foothold) or a typed
    rejection reason; never raises on unsupported poses.
    """
    params = params or PlannerParams()
    return _as_index(regions, params).snap(x, y, yaw)


def check_transition(support: Footstep, candidate: Footstep, regions,
                     params: PlannerParams | None = None) -> str | None:
    """Validate one step relative to its support foot. None means ok.

    Checks run in a fixed order so rejection counts are reproducible: reach
    box, step height, yaw delta, cliff proximity, sole collision.
    """
    params = params or PlannerParams()
    index = _as_index(regions, params)
    c, s = math.cos(support.yaw), math.sin(support.yaw)
    dx, dy = candidate.x - support.x, candidate.y - support.y
    fwd = c * dx + s * dy
    lat = (-s * dx + c * dy) * _side_sign(candidate.side)
    if not (params.reach_fwd_min - 1e-9 <= fwd <= params.reach_fwd_max + 1e-9):
        return REJECT_REACH
    if not (params.reach_lat_min - 1e-9 <= lat <= params.reach_lat_max + 1e-9):
        return REJECT_REACH
    dz = candidate.z - support.z
    if dz > params.max_step_up + 1e-9 or -dz > params.max_step_down + 1e-9:
        return REJECT_STEP_HEIGHT
    if abs(wrap_angle(candidate.yaw - support.yaw)) > \
            math.radians(params.max_foot_yaw_deg) + 1e-9:
        return REJECT_REACH
    if index.cliff_conflict(candidate.x, candidate.y, candidate.yaw, candidate.z):
        return REJECT_CLIFF
    if polygons_overlap(candidate.sole_polygon(params), support.sole_polygon(params)):
        return REJECT_COLLISION
    return None


def _quant(v: float, q: float) -> int:
    return int(round(v / q))


def _foot_key(f: Footstep, params: PlannerParams) -> tuple[int, int, int]:
    return (_quant(f.x, params.grid_xy), _quant(f.y, params.grid_xy),
            _quant(f.yaw, math.radians(params.grid_yaw_deg)) % _YAW_BINS)


def _mid_of(a: Footstep, b: Footstep) -> Pose2:
    yaw = a.yaw + 0.5 * wrap_angle(b.yaw - a.yaw)
    return Pose2((a.x + b.x) / 2.0, (a.y + b.y) / 2.0, wrap_angle(yaw))


def _inputs_digest(regions, stance: StanceState, subgoal: Pose2,
                   first_side: str) -> str:
    h = zlib.crc32(first_side.encode())
    for f in (stance.left, stance.right):
        h = zlib.crc32(f"{f.x:.6f},{f.y:.6f},{f.z:.6f},{f.yaw:.6f}".encode(), h)
    h = zlib.crc32(f"{subgoal.x:.6f},{subgoal.y:.6f},{subgoal.yaw:.6f}".encode(), h)
    for r in regions:
        h = zlib.crc32(np.ascontiguousarray(r.concave_hull).tobytes(), h)
        h = zlib.crc32(np.ascontiguousarray(r.plane_point).tobytes(), h)
        h = zlib.crc32(np.ascontiguousarray(r.plane_normal).tobytes(), h)
    return f"{h & 0xFFFFFFFF:08x}"


# wiggle moves in preference order: stay, then small shifts, then full-cell
# shifts, yaw last; the first strict clearance improvement in this order wins
# ties between equally good moves
def _end_pose_ok(last: Footstep, prior: Footstep, subgoal: Pose2,
                 params: PlannerParams) -> bool:
    """Goal condition on the mid pose of the two final placements."""
    if math.hypot((last.x + prior.x) / 2.0 - subgoal.x,
                  (last.y + prior.y) / 2.0 - subgoal.y) > params.goal_xy_tol:
        return False
    myaw = last.yaw + 0.5 * wrap_angle(prior.yaw - last.yaw)
    return abs(wrap_angle(myaw - subgoal.yaw)) <= params.goal_yaw_tol


def _wiggle_moves(params: PlannerParams):
    g = params.grid_xy
    gy = math.radians(params.grid_yaw_deg)
    moves = []
    for dx in (-g, -g / 2.0, 0.0, g / 2.0, g):
        for dy in (-g, -g / 2.0, 0.0, g / 2.0, g):
            for dyaw in (-gy, 0.0, gy):
                if dx == 0.0 and dy == 0.0 and dyaw == 0.0:
                    continue
                moves.append((dx, dy, dyaw))
    moves.sort(key=lambda m: (m[0] * m[0] + m[1] * m[1], abs(m[2]), m))
    return moves


def _clearance(snap: SnapResult, index: _RegionIndex) -> float:
    hull = index.hull_of(snap.region_id)
    if hull is None or snap.foothold_world is None or len(hull) < 3:
        return 0.0
    return polygon_outline_distance(snap.foothold_world, hull)


def _sole_frame(foothold_world: np.ndarray, x: float, y: float,
                yaw: float) -> tuple[tuple[float, float], ...]:
    local = (foothold_world - np.array([x, y])) @ rot2(yaw)
    return tuple((float(u), float(v)) for u, v in local)


def wiggle(step: Footstep, regions, params: PlannerParams | None = None,
           predecessor: Footstep | None = None,
           successor: Footstep | None = None) -> Footstep:
    """Nudge a snapped step inside its region for boundary clearance.

    Gradient-free search over at most one lattice cell of translation and one
    yaw branch. A move is taken only when it strictly increases the foothold's
    distance to the region hull without shrinking the foothold fraction or
    invalidating the transition from `predecessor` (or to `successor`, which
    keeps already-planned sequences consistent). Identity when nothing helps.
    """
    params = params or PlannerParams()
    index = _as_index(regions, params)
    base = index.snap(step.x, step.y, step.yaw)
    if not base.ok:
        return step
    if base.region_id < 0:
        # synthetic support patch (apron / blind-zone fill); its hull is a
        # modeling artifact, not a boundary worth optimizing against
        return step
    best_clear = _clearance(base, index)
    best = None
    for dx, dy, dyaw in _wiggle_moves(params):
        x, y, yaw = step.x + dx, step.y + dy, wrap_angle(step.yaw + dyaw)
        cand_snap = index.snap(x, y, yaw)
        if not cand_snap.ok or cand_snap.fraction < base.fraction - 1e-9:
            continue
        if cand_snap.region_id != base.region_id:
            # clearances against different hulls do not compare
            continue
        clear = _clearance(cand_snap, index)
        if clear <= best_clear + 1e-12:
            continue
        cand = Footstep(side=step.side, x=x, y=y, z=cand_snap.z, yaw=yaw,
                        region_id=cand_snap.region_id,
                        foothold_fraction=cand_snap.fraction,
                        foothold=_sole_frame(cand_snap.foothold_world, x, y, yaw),
                        square_up=step.square_up)
        if predecessor is not None and \
                check_transition(predecessor, cand, index, params) is not None:
            continue
        if successor is not None and \
                check_transition(cand, successor, index, params) is not None:
            continue
        best_clear = clear
        best = cand
    return best if best is not None else step


def format_rejection_summary(rejections: dict[str, int]) -> str:
    """Console form of the rejection counts: 'reason: count', most frequent first."""
    items = sorted(rejections.items(), key=lambda kv: (-kv[1], kv[0]))
    return "; ".join(f"{reason}: {count}" for reason, count in items)


def write_plan_log(plan: FootstepPlan, path) -> None:
    """Write the versioned text log of one planner call (format in module doc)."""
    params = plan.params or PlannerParams()
    fields = sorted(params.__dataclass_fields__)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# footstep-plan-log v{PLAN_LOG_VERSION}\n")
        fh.write("# params: " + " ".join(f"{k}={getattr(params, k)}" for k in fields)
                 + "\n")
        fh.write(f"# inputs: digest={plan.inputs_digest} first_side={plan.first_side} "
                 f"subgoal=({plan.subgoal.x:.4f} {plan.subgoal.y:.4f} "
                 f"{plan.subgoal.yaw:.4f})\n")
        fh.write(f"# result: status={plan.status} steps={len(plan.steps)} "
                 f"expanded={plan.expanded} cost={plan.cost:.6f} "
                 f"duration_s={plan.duration_s:.4f}\n")
        fh.write("# rejections: " + format_rejection_summary(plan.rejections) + "\n")
        fh.write("# columns: id parent side x y z yaw status detail\n")
        for rec in plan.log_records:
            rid, parent, side, x, y, z, yaw, status, detail = rec
            if status == "ok":
                detail = f"g={detail:.6f}"
            fh.write(f"{rid} {parent} {side} {x:.6f} {y:.6f} {z:.6f} {yaw:.6f} "
                     f"{status} {detail}\n")


def plan_footsteps(regions, stance: StanceState, subgoal: Pose2,
                   params: PlannerParams | None = None,
                   timeout_s: float | None = None,
                   first_side: str | None = None,
                   min_steps: int | None = None,
                   cancel: Callable[[], bool] | None = None) -> FootstepPlan:
    """Plan a step sequence from the stance toward the subgoal.

    Full when the mid-feet goal condition is met at depth >= min_steps,
    otherwise the best partial branch found within budget; failed when not
    even one valid step exists. The search is deterministic for fixed inputs:
    effort is an expansion budget derived from the timeout and ties break on
    insertion order. `cancel` is polled once per expansion.
    """
    params = params or PlannerParams()
    if timeout_s is None:
        timeout_s = params.timeout_s
    if min_steps is None:
        min_steps = params.min_full_steps
    t0 = time.perf_counter()
    regions = tuple(regions) if not isinstance(regions, _RegionIndex) else regions
    index = _as_index(regions, params)
    raw_regions = [e[0] for e in index.entries]
    rejections: dict[str, int] = {}
    grid_yaw = math.radians(params.grid_yaw_deg)

    if first_side is None:
        # swing the foot that lags along the direction to the subgoal
        mid = stance.mid_pose()
        d = np.array([subgoal.x - mid.x, subgoal.y - mid.y])
        if np.linalg.norm(d) < 1e-9:
            d = np.array([math.cos(subgoal.yaw), math.sin(subgoal.yaw)])
        lproj = float(d @ (stance.left.x, stance.left.y))
        rproj = float(d @ (stance.right.x, stance.right.y))
        first_side = LEFT if lproj <= rproj else RIGHT

    digest = _inputs_digest(raw_regions, stance, subgoal, first_side)

    grid_xy = params.grid_xy
    # longest-forward candidates enumerate first: exact cost ties (common on
    # flat ground, where |delta d| telescopes) then break toward progress, so
    # the first step of a replanned sequence keeps advancing the walk
    fwd_offsets = np.arange(params.reach_fwd_max, params.reach_fwd_min - 1e-9,
                            -grid_xy).tolist()
    lat_offsets = np.arange(params.reach_lat_min, params.reach_lat_max + 1e-9,
                            grid_xy).tolist()
    half_l = params.sole_length / 2.0
    half_w = params.sole_width / 2.0

    snap_cache: dict[tuple[int, int, int], SnapResult] = {}
    cliff_cache: dict[tuple[int, int, int], bool] = {}

    # Candidate cells, reach verdicts and sole corners depend only on the
    # support's yaw bin and the swing side, so they are built once per bin and
    # replayed as integer cell offsets. Only the root stance sits off-lattice;
    # it expands through the generic path below.
    cand_tables: dict[tuple[int, float], tuple] = {}
    sole_offsets: dict[int, tuple] = {}

    def sole_corner_offsets(nbin: int) -> tuple:
        offs = sole_offsets.get(nbin)
        if offs is None:
            c, s = math.cos(nbin * grid_yaw), math.sin(nbin * grid_yaw)
            lc, ws = half_l * c, half_w * s
            ls, wc = half_l * s, half_w * c
            offs = ((lc - ws, ls + wc), (-lc - ws, -ls + wc),
                    (-lc + ws, -ls - wc), (lc + ws, ls - wc))
            sole_offsets[nbin] = offs
        return offs

    # Sole collision between two lattice rectangles reduces to a 4-axis
    # separating test on the bins' own edge directions; the projection
    # thresholds depend only on the relative yaw bin.
    bin_cs = tuple((math.cos(b * grid_yaw), math.sin(b * grid_yaw))
                   for b in range(_YAW_BINS))
    overlap_thr = []
    for rb in range(_YAW_BINS):
        dc = abs(math.cos(rb * grid_yaw))
        ds = abs(math.sin(rb * grid_yaw))
        overlap_thr.append((half_l + half_l * dc + half_w * ds - 1e-12,
                            half_w + half_l * ds + half_w * dc - 1e-12))
    overlap_thr = tuple(overlap_thr)

    def candidate_table(sbin: int, sign: float) -> tuple:
        tab = cand_tables.get((sbin, sign))
        if tab is None:
            cb = math.cos(sbin * grid_yaw)
            sb = math.sin(sbin * grid_yaw)
            ent = []
            seen: set[tuple[int, int, int]] = set()
            for fo in fwd_offsets:
                for lo in lat_offsets:
                    wx = cb * fo - sb * (sign * lo)
                    wy = sb * fo + cb * (sign * lo)
                    dcx = math.floor(wx / grid_xy + 0.5)
                    dcy = math.floor(wy / grid_xy + 0.5)
                    for db in (-1, 0, 1):
                        rel = (dcx, dcy, db)
                        if rel in seen:
                            continue
                        seen.add(rel)
                        nbin = (sbin + db) % _YAW_BINS
                        qdx, qdy = dcx * grid_xy, dcy * grid_xy
                        fwd = cb * qdx + sb * qdy
                        lat = (-sb * qdx + cb * qdy) * sign
                        ok = (params.reach_fwd_min - 1e-9 <= fwd
                              <= params.reach_fwd_max + 1e-9
                              and params.reach_lat_min - 1e-9 <= lat
                              <= params.reach_lat_max + 1e-9)
                        ent.append((dcx, dcy, nbin,
                                    wrap_angle(nbin * grid_yaw), ok))
            tab = tuple(ent)
            cand_tables[(sbin, sign)] = tab
        return tab

    def generic_candidates(sx: float, sy: float, syaw: float, sign: float) -> list:
        cs, sn = math.cos(syaw), math.sin(syaw)
        max_yaw = math.radians(params.max_foot_yaw_deg) + 1e-9
        ent = []
        seen: set[tuple[int, int, int]] = set()
        for fo in fwd_offsets:
            for lo in lat_offsets:
                for dyaw in (-grid_yaw, 0.0, grid_yaw):
                    x = sx + cs * fo - sn * (sign * lo)
                    y = sy + sn * fo + cs * (sign * lo)
                    bcx = _quant(x, grid_xy)
                    bcy = _quant(y, grid_xy)
                    byaw = _quant(wrap_angle(syaw + dyaw), grid_yaw)
                    nbin = byaw % _YAW_BINS
                    akey = (bcx, bcy, nbin)
                    if akey in seen:
                        continue
                    seen.add(akey)
                    qx, qy = bcx * grid_xy, bcy * grid_xy
                    qyaw = wrap_angle(byaw * grid_yaw)
                    fwd = cs * (qx - sx) + sn * (qy - sy)
                    lat = (-sn * (qx - sx) + cs * (qy - sy)) * sign
                    ok = (params.reach_fwd_min - 1e-9 <= fwd
                          <= params.reach_fwd_max + 1e-9
                          and params.reach_lat_min - 1e-9 <= lat
                          <= params.reach_lat_max + 1e-9
                          and abs(wrap_angle(qyaw - syaw)) <= max_yaw)
                    ent.append((bcx, bcy, nbin, qyaw, ok))
        return ent

    # Lower bound on cost-to-go: one step moves a foot from its previous
    # placement to a new one, i.e. across two consecutive reach boxes with
    # opposite lateral signs and at most max_foot_yaw of relative support
    # rotation; the mid-feet point advances half that displacement. The max
    # is attained at a box vertex with the relative yaw clamped toward
    # alignment, so remaining distance D needs at least w_dist*D of distance
    # cost plus cost_per_step steps for max(D/step_gain, min_steps - depth)
    # edges (the depth floor comes from the goal test itself). An oversized
    # root stance gets a one-step slack so the bound holds on the first edge.
    _yaw_lim = math.radians(params.max_foot_yaw_deg)
    _pair = 0.0
    for _f1 in (params.reach_fwd_min, params.reach_fwd_max):
        for _l1 in (params.reach_lat_min, params.reach_lat_max):
            for _f2 in (params.reach_fwd_min, params.reach_fwd_max):
                for _l2 in (params.reach_lat_min, params.reach_lat_max):
                    _phi = wrap_angle(math.atan2(-_l2, _f2)
                                      - math.atan2(_l1, _f1))
                    _phi = max(-_yaw_lim, min(_yaw_lim, _phi))
                    _c, _s = math.cos(_phi), math.sin(_phi)
                    _pair = max(_pair, math.hypot(_c * _f1 - _s * _l1 + _f2,
                                                  _s * _f1 + _c * _l1 - _l2))
    step_gain = _pair / 2.0
    reach_diag = math.hypot(max(abs(params.reach_fwd_min), params.reach_fwd_max),
                            max(abs(params.reach_lat_min), params.reach_lat_max))

    sgx, sgy, sgyaw = subgoal.x, subgoal.y, subgoal.yaw

    def is_goal(last, prior, depth: int) -> bool:
        # nodes carry feet as (x, y, z, yaw) tuples; the goal test runs on the
        # mid-feet pose of the last two placements
        if depth < min_steps:
            return False
        if math.hypot((last[0] + prior[0]) / 2.0 - sgx,
                      (last[1] + prior[1]) / 2.0 - sgy) > params.goal_xy_tol:
            return False
        myaw = last[3] + 0.5 * wrap_angle(prior[3] - last[3])
        return abs(wrap_angle(myaw - sgyaw)) <= params.goal_yaw_tol

    first_foot = stance.foot(first_side)
    support_foot = stance.foot(other_side(first_side))
    start_key = (first_side, _foot_key(support_foot, params),
                 _foot_key(first_foot, params))

    root_span = math.hypot(first_foot.x - support_foot.x,
                           first_foot.y - support_foot.y)
    h_slack = params.goal_xy_tol + \
        max(0.0, (reach_diag + root_span) / 2.0 - step_gain)

    cost_step = params.cost_per_step
    w_dist, w_yaw, w_area = params.w_dist, params.w_yaw, params.w_area
    inv_gain = 1.0 / step_gain

    # remaining edges are floored both by distance/step_gain and by the
    # min_steps depth requirement; each edge costs at least cost_per_step
    def heur(d_mid: float, depth: int) -> float:
        dd = d_mid - h_slack
        if dd < 0.0:
            dd = 0.0
        n = dd * inv_gain
        need = min_steps - depth
        if need > n:
            n = need
        return w_dist * dd + cost_step * n

    budget = max(50, int(timeout_s * _EXPANSIONS_PER_SECOND))
    wall_cap = timeout_s * 1.5

    mid0 = _mid_of(support_foot, first_foot)
    d0 = math.hypot(mid0.x - sgx, mid0.y - sgy)

    g_cost = {start_key: 0.0}
    feet_at = {start_key: (  # (last placed, other), both (x, y, z, yaw)
        (support_foot.x, support_foot.y, support_foot.z, support_foot.yaw),
        (first_foot.x, first_foot.y, first_foot.z, first_foot.yaw))}
    depth_at = {start_key: 0}
    d_at = {start_key: d0}
    parent: dict = {start_key: None}
    placed: dict = {start_key: None}
    rec_of = {start_key: 0}
    records: list[tuple] = [(0, -1, other_side(first_side), support_foot.x,
                             support_foot.y, support_foot.z, support_foot.yaw,
                             "root", "-")]

    h0 = heur(d0, 0)
    # ties on f prefer the deeper node (larger g), then insertion order;
    # equal-cost plateaus collapse to a single dig toward the subgoal
    open_heap = [(h0, 0.0, 0, start_key)]
    counter = 1
    best_leaf = None  # (h, g, insertion, key)
    expanded = 0
    goal_key = None
    canceled = False

    def reject(reason, parent_rec, side, x, y, yaw, z=float("nan")):
        rejections[reason] = rejections.get(reason, 0) + 1
        records.append((len(records), parent_rec, side, x, y, z, yaw,
                        "rejected", reason))

    max_up = params.max_step_up + 1e-9
    max_down = params.max_step_down + 1e-9
    inf = math.inf

    while open_heap:
        if expanded >= budget or time.perf_counter() - t0 > wall_cap:
            break
        if cancel is not None and cancel():
            canceled = True
            break
        f_val, _depth_pref, _order, key = heapq.heappop(open_heap)
        last, prior = feet_at[key]
        if g_cost[key] + heur(d_at[key], depth_at[key]) < f_val - 1e-9:
            continue  # superseded heap entry
        if is_goal(last, prior, depth_at[key]):
            goal_key = key
            break
        expanded += 1
        swing_side = key[0]
        nswing = other_side(swing_side)
        support_key = key[1]
        sx, sy, sz, syaw = last
        swing_yaw = prior[3]
        sign = _side_sign(swing_side)
        parent_rec = rec_of[key]
        g_here = g_cost[key]
        d_here = d_at[key]
        ndepth = depth_at[key] + 1

        if key == start_key:
            cands = generic_candidates(sx, sy, syaw, sign)
            bx = by = 0
            sbin = None
            support_sole = index._sole_pts(sx, sy, syaw, half_l, half_w)
        else:
            # non-root supports sit exactly on the lattice cell of their key
            cands = candidate_table(support_key[2], sign)
            bx, by = support_key[0], support_key[1]
            sbin = support_key[2]
            sca, ssa = bin_cs[sbin]

        for dcx, dcy, nbin, qyaw, reach_ok in cands:
            qcx = bx + dcx
            qcy = by + dcy
            qx = qcx * grid_xy
            qy = qcy * grid_xy
            if not reach_ok:
                reject(REJECT_REACH, parent_rec, swing_side, qx, qy, qyaw)
                continue
            qkey = (qcx, qcy, nbin)
            snapped = snap_cache.get(qkey)
            if snapped is None:
                snapped = index.snap(qx, qy, qyaw)
                snap_cache[qkey] = snapped
            if not snapped.ok:
                reject(snapped.reason, parent_rec, swing_side, qx, qy, qyaw)
                continue
            dz = snapped.z - sz
            if dz > max_up or -dz > max_down:
                reject(REJECT_STEP_HEIGHT, parent_rec, swing_side, qx, qy,
                       qyaw, snapped.z)
                continue
            blocked = cliff_cache.get(qkey)
            if blocked is None:
                blocked = index.cliff_conflict(qx, qy, qyaw, snapped.z)
                cliff_cache[qkey] = blocked
            if blocked:
                reject(REJECT_CLIFF, parent_rec, swing_side, qx, qy, qyaw,
                       snapped.z)
                continue
            if sbin is None:
                cand_sole = [(qx + ox, qy + oy)
                             for ox, oy in sole_corner_offsets(nbin)]
                hit = polygons_overlap(cand_sole, support_sole)
            else:
                tx, ty = qx - sx, qy - sy
                t1, t2 = overlap_thr[(nbin - sbin) % _YAW_BINS]
                cb_, sb_ = bin_cs[nbin]
                hit = (abs(tx * sca + ty * ssa) < t1
                       and abs(ty * sca - tx * ssa) < t2
                       and abs(tx * cb_ + ty * sb_) < t1
                       and abs(ty * cb_ - tx * sb_) < t2)
            if hit:
                reject(REJECT_COLLISION, parent_rec, swing_side, qx, qy,
                       qyaw, snapped.z)
                continue

            nkey = (nswing, qkey, support_key)
            nd = math.hypot((qx + sx) / 2.0 - sgx, (qy + sy) / 2.0 - sgy)
            ng = (g_here + cost_step
                  + w_dist * abs(nd - d_here)
                  + w_yaw * abs(wrap_angle(qyaw - swing_yaw))
                  + w_area * (1.0 - snapped.fraction))
            if ng >= g_cost.get(nkey, inf) - 1e-12:
                continue
            g_cost[nkey] = ng
            feet_at[nkey] = ((qx, qy, snapped.z, qyaw), last)
            depth_at[nkey] = ndepth
            d_at[nkey] = nd
            parent[nkey] = key
            placed[nkey] = (swing_side, qx, qy, snapped.z, qyaw, snapped)
            rec_of[nkey] = len(records)
            records.append((len(records), parent_rec, swing_side, qx, qy,
                            snapped.z, qyaw, "ok", ng))
            h = heur(nd, ndepth)
            if best_leaf is None or (h, ng, counter) < best_leaf[:3]:
                best_leaf = (h, ng, counter, nkey)
            heapq.heappush(open_heap, (ng + h, -ng, counter, nkey))
            counter += 1

    if goal_key is not None:
        end_key = goal_key
        status = STATUS_FULL
    elif best_leaf is not None:
        end_key = best_leaf[3]
        status = STATUS_PARTIAL
    else:
        end_key = start_key
        status = STATUS_FAILED

    steps: list[Footstep] = []
    k = end_key
    while parent[k] is not None:
        side, x, y, z, yaw, snapped = placed[k]
        steps.append(Footstep(side=side, x=x, y=y, z=z, yaw=yaw,
                              region_id=snapped.region_id,
                              foothold_fraction=snapped.fraction,
                              foothold=_sole_frame(snapped.foothold_world,
                                                   x, y, yaw)))
        k = parent[k]
    steps.reverse()
    cost = g_cost[end_key]

    # polish every returned step in place; chain predecessors through the
    # already-wiggled prefix so the sequence stays transition-valid
    if steps and not canceled:
        orig_tail = tuple(steps[-2:])
        prev = stance.foot(other_side(first_side))
        for i, step in enumerate(steps):
            nxt = steps[i + 1] if i + 1 < len(steps) else None
            steps[i] = wiggle(step, index, params, predecessor=prev, successor=nxt)
            prev = steps[i]
        if status == STATUS_FULL and len(steps) >= 2 and not _end_pose_ok(
                steps[-1], steps[-2], subgoal, params):
            # polish must not walk the sequence off the goal condition; the
            # final two placements define the arrival pose, so they revert
            for i, orig in ((len(steps) - 2, orig_tail[0]),
                            (len(steps) - 1, orig_tail[1])):
                steps[i] = orig

    return FootstepPlan(steps=tuple(steps), status=status, subgoal=subgoal,
                        expanded=expanded, duration_s=time.perf_counter() - t0,
                        cost=cost, rejections=rejections, first_side=first_side,
                        inputs_digest=digest, log_records=tuple(records),
                        params=params)

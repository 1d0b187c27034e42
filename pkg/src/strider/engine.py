"""Event-driven coordination of perception, planning, and walking.

One engine instance owns the simulated clock. Each tick applies timed terrain
edits, runs queued operator commands, advances the walk, and services the
perception schedule. Planning work happens inside the tick that requests it
and consumes no simulated time; wall durations go to the timing telemetry
only. All randomness derives from (base seed, stream, frame index), so a
scenario replays identically for a given seed.

The body path is planned once per goal; footsteps are re-planned continuously
from the imminent stance on the freshest regions, so walking never waits for
perception. Node wiring uses three primitives only: latest-wins channels
(stale data is suppressed, never queued), channel inhibition (the blocked
corridor gates plan submission), and reset (a fall clears everything back to
idle). Keeping the vocabulary this small is what makes the behavior graph
auditable.
"""

from __future__ import annotations

import dataclasses
import math
import time
from collections import deque
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .executor import (EV_DISABLED, EV_QUEUE_EMPTY, EV_SQUARED_UP,
                       EV_STEP_COMPLETED, EV_SWING_HALF, EV_SWING_STARTED,
                       EV_TRANSFER_STARTED, TRANSFER, WalkExecutor, WalkTiming)
from .footsteps import (LEFT, RIGHT, STATUS_FULL, STATUS_PARTIAL, Footstep,
                        FootstepPlan, PlannerParams, StanceState,
                        check_transition, other_side, plan_footsteps,
                        snap_to_regions, write_plan_log)
from .geometry import Pose2, plane_basis, wrap_angle
from .heightmap import (BodyPath, BodyPathError, BodyPathParams, HeightMap,
                        ImpassibilityParams, TraversabilityParams,
                        check_impassibility, plan_body_path)
from .regions import (PlanarRegion, RegionExtraction, RegionParams,
                      extract_regions, write_regions_ppm)
from .sensors import (FULL_CAMERA_SPEC, FULL_LIDAR_SPEC, DepthCameraSpec,
                      LidarSpec, render_depth, render_lidar, write_depth_pgm)
from .telemetry import (STAGE_BODY_PATH, STAGE_FOOTSTEPS, STAGE_REGIONS,
                        ReplayWriter, StageTiming, StepRecord, classify_step,
                        compute_run_statistics, contact_info,
                        write_statistics_file, write_timing_file)
from .terrain import (Scenario, TerrainWorld, apply_edits, sample_height,
                      support_block_id)

IDLE = "idle"
BODY_PATH_PLANNING = "body_path_planning"
BODY_PATH_REVIEW = "body_path_review"
PERCEIVING = "perceiving"
FOOTSTEP_PLANNING = "footstep_planning"
FOOTSTEP_REVIEW = "footstep_review"
STEPPING = "stepping"
HALTED_IMPASSABLE = "halted_impassable"
GOAL_REACHED = "goal_reached"

STATES = (IDLE, BODY_PATH_PLANNING, BODY_PATH_REVIEW, PERCEIVING,
          FOOTSTEP_PLANNING, FOOTSTEP_REVIEW, STEPPING, HALTED_IMPASSABLE,
          GOAL_REACHED)

REVIEW_BODY_PATH = "body_path"
REVIEW_FOOTSTEPS = "footsteps"

_STREAM_CAMERA = 1
_STREAM_LIDAR = 2
_STREAM_OBSTACLE = 3

# Proprioceptive support apron: the camera cannot see the floor right under
# the robot, so when both soles agree on height we trust them and extend a
# synthetic level region around the stance, forward only as far as observed
# map cells agree with it.
APRON_REGION_ID = -2
_APRON_LEVEL_TOL = 0.02
_APRON_Z_TOL = 0.04
_APRON_BACK = 0.35
_APRON_FORWARD = 0.85
_APRON_HALF_WIDTH = 0.60
_APRON_MIN_FORWARD = 0.10
_APRON_STRIP = 0.05

_SEED_DISK_RADIUS = 1.5
_STARTUP_FILL_PASSES = 8
_STARTUP_FILL_NEIGHBORS = 3


def _frame_points(frame) -> np.ndarray:
    """Valid world points of a depth frame, flattened for the height map."""
    pts = frame.back_project().reshape(-1, 3)
    return pts[~np.isnan(pts[:, 0])]


class BehaviorState:
    """State names; values travel verbatim in state messages."""
    IDLE = IDLE
    BODY_PATH_PLANNING = BODY_PATH_PLANNING
    BODY_PATH_REVIEW = BODY_PATH_REVIEW
    PERCEIVING = PERCEIVING
    FOOTSTEP_PLANNING = FOOTSTEP_PLANNING
    FOOTSTEP_REVIEW = FOOTSTEP_REVIEW
    STEPPING = STEPPING
    HALTED_IMPASSABLE = HALTED_IMPASSABLE
    GOAL_REACHED = GOAL_REACHED


class Channel:
    """Latest-wins mailbox wiring one producer node to one consumer node.

    post() overwrites any unconsumed value, so stale data is suppressed rather
    than queued. take() consumes, and yields None while the channel is
    inhibited. reset() drops everything. These three verbs are the whole
    coordination vocabulary between behavior nodes.
    """

    def __init__(self, name: str):
        self.name = name
        self.inhibited = False
        self._value = None
        self.posts = 0
        self.suppressed = 0

    def post(self, value) -> None:
        if self._value is not None:
            self.suppressed += 1
        self._value = value
        self.posts += 1

    def take(self):
        if self.inhibited or self._value is None:
            return None
        value, self._value = self._value, None
        return value

    def peek(self):
        return self._value

    def reset(self) -> None:
        self._value = None
        self.inhibited = False


@dataclass
class ReviewGates:
    body_path: bool = True
    footsteps: bool = True


@dataclass(frozen=True)
class EngineConfig:
    base_seed: int = 0
    autonomous: bool = True             # True disables both review gates
    sensor_res: str = "low"             # "low" for the desk profile, "full"
    out_dir: str | None = None
    dump_frames: bool = False
    timing: WalkTiming = field(default_factory=WalkTiming)
    planner: PlannerParams = field(default_factory=PlannerParams)
    body_path: BodyPathParams = field(default_factory=BodyPathParams)
    regions: RegionParams = field(default_factory=RegionParams)
    impassibility: ImpassibilityParams = field(default_factory=ImpassibilityParams)
    impassibility_enabled: bool = True
    goal_xy_tol: float = 0.10
    goal_yaw_tol: float = 0.25
    subgoal_advance: float = 0.8
    subgoal_advance_curved: float = 0.4
    curvature_threshold: float = 0.5    # rad/m; above this the short advance applies
    retry_period: float = 2.0
    retry_timeout_scale: float = 2.0
    retry_timeout_cap: float = 4.0      # multiple of the default planner timeout
    terminal_boost_cap: float = 8.0     # same idea, final-approach plans only
    idle_perception_period: float = 0.5
    poll_period: float = 0.5            # corridor check cadence while a goal is live
    clear_polls_to_resume: int = 2
    pose_decimation: int = 12           # ticks between state messages (~20 Hz)

    def camera_spec(self) -> DepthCameraSpec:
        return FULL_CAMERA_SPEC if self.sensor_res == "full" else DepthCameraSpec()

    def lidar_spec(self) -> LidarSpec:
        return FULL_LIDAR_SPEC if self.sensor_res == "full" else LidarSpec()


def nominal_stance(pose: Pose2, z_left: float, z_right: float,
                   params: PlannerParams) -> tuple[Footstep, Footstep]:
    half = params.stance_width / 2.0
    lx = pose.x - math.sin(pose.yaw) * half
    ly = pose.y + math.cos(pose.yaw) * half
    rx = pose.x + math.sin(pose.yaw) * half
    ry = pose.y - math.cos(pose.yaw) * half
    return (Footstep(side=LEFT, x=lx, y=ly, z=z_left, yaw=pose.yaw),
            Footstep(side=RIGHT, x=rx, y=ry, z=z_right, yaw=pose.yaw))


_PLANNER_FIELDS = frozenset(f.name for f in fields(PlannerParams))
_BODY_FIELDS = frozenset(f.name for f in fields(BodyPathParams)) - {"trav"}
_TRAV_FIELDS = frozenset(f.name for f in fields(TraversabilityParams))


class BehaviorEngine:
    def __init__(self, scenario: Scenario, config: EngineConfig | None = None):
        self.config = config or EngineConfig()
        self.scenario = scenario
        self.world = TerrainWorld.from_scenario(scenario)
        self.timing = StageTiming()
        self.hm = HeightMap(self.world.bounds)

        start = scenario.robot_start
        left, right = nominal_stance(
            start,
            sample_height(self.world, *self._foot_xy(start, LEFT)),
            sample_height(self.world, *self._foot_xy(start, RIGHT)),
            self.config.planner)
        self.executor = WalkExecutor(self.config.timing, left, right)

        # runtime-editable copies; review rejections and set_params land here
        self.planner_params = self.config.planner
        self.body_path_params = self.config.body_path
        self.reviews = ReviewGates(body_path=not self.config.autonomous,
                                   footsteps=not self.config.autonomous)
        self.impassibility_enabled = self.config.impassibility_enabled

        self.state = IDLE
        self.goal: Pose2 | None = None
        self.body_path: BodyPath | None = None
        self.subgoal: Pose2 | None = None
        self.regions: RegionExtraction | None = None
        self.pending_body_path: BodyPath | None = None
        self.pending_plan: FootstepPlan | None = None
        self.last_statistics = None

        self.ch_regions = Channel("regions")
        self.ch_plan = Channel("plan")

        self._tick = 0
        self._state_since = 0.0
        self._camera_frames = 0
        self._lidar_frames = 0
        self._commands: deque = deque()
        self._listeners: list = []
        self._replay: ReplayWriter | None = None
        self._started = False
        self._robot_down = False
        self._finishing = False
        self._terminal_latch = False
        self._terminal_boost = 1.0

        self._next_idle_perception = 0.0
        self._next_poll = 0.0
        self._next_retry: float | None = None
        self._retry_timeout = self.config.planner.timeout_s
        self._clear_polls = 0
        self._injected_obstacle: np.ndarray | None = None
        self._world_version = 0
        self._pending_plan_version = 0

        self._records: list[StepRecord] = []
        self._swing_origins: dict[str, Footstep] = {}
        self._moved_since_goal: set[int] = set()
        self._distance = 0.0
        self._last_mid = self.executor.mid_pose()
        self._first_transfer_t: float | None = None
        self._plan_count = 0
        self._last_first_step: Footstep | None = None
        self.plan_churn: list[float] = []

        if self.config.out_dir:
            out = Path(self.config.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            self._replay = ReplayWriter(out / "replay.jsonl")

    @staticmethod
    def _foot_xy(pose: Pose2, side: str) -> tuple[float, float]:
        half = PlannerParams().stance_width / 2.0
        s = 1.0 if side == LEFT else -1.0
        return (pose.x - math.sin(pose.yaw) * half * s,
                pose.y + math.cos(pose.yaw) * half * s)

    # -- plumbing -------------------------------------------------------------

    @property
    def sim_time(self) -> float:
        return self._tick * self.config.timing.dt

    def subscribe(self, fn) -> None:
        self._listeners.append(fn)

    def enqueue_command(self, command: dict) -> None:
        """Thread-safe; the command runs at the next tick boundary."""
        self._commands.append(dict(command))

    def _emit(self, kind: str, data, to_replay: bool = True) -> None:
        if self._replay is not None and to_replay:
            self._replay.write(kind, self.sim_time, data)
        for fn in self._listeners:
            fn(kind, self.sim_time, data)

    def close(self) -> None:
        if self._replay is not None:
            self._replay.close()

    # -- perception -----------------------------------------------------------

    def _camera_seed(self) -> int:
        seq = np.random.SeedSequence(
            entropy=[self.config.base_seed, _STREAM_CAMERA, self._camera_frames])
        return int(seq.generate_state(1)[0])

    def _lidar_seed(self) -> int:
        seq = np.random.SeedSequence(
            entropy=[self.config.base_seed, _STREAM_LIDAR, self._lidar_frames])
        return int(seq.generate_state(1)[0])

    def start(self) -> None:
        """Prime the height map and the regions channel before any goal."""
        if self._started:
            return
        self._started = True
        t0 = time.perf_counter()
        cloud = render_lidar(self.world, self.executor.mid_pose(), FULL_LIDAR_SPEC,
                             self._lidar_seed(), timestamp=self.sim_time,
                             base_z=self.executor.mid_z())
        self._lidar_frames += 1
        self.hm.update_from_points(cloud.points, timestamp=self.sim_time)
        # the sweep cannot look steeply down, so the ring around the robot
        # comes from the forward camera wedge plus a proprioceptive seed;
        # both are real or locally-grounded data, and they must land before
        # the hole fill so gaps get bridged from measurements, not guesses
        frame = render_depth(self.world, self.executor.mid_pose(),
                             self.config.camera_spec(), self._camera_seed(),
                             timestamp=self.sim_time, base_z=self.executor.mid_z())
        self._camera_frames += 1
        self.hm.update_from_points(_frame_points(frame), timestamp=self.sim_time)
        mid = self.executor.mid_pose()
        self.hm.seed_disk(mid.x, mid.y, _SEED_DISK_RADIUS, self.executor.mid_z())
        self.hm.fill_holes(passes=_STARTUP_FILL_PASSES,
                           min_neighbors=_STARTUP_FILL_NEIGHBORS)
        self.timing.record("Height map update", time.perf_counter() - t0)
        self._emit("height_map", self.hm.snapshot(), to_replay=False)
        self._emit("height_map_meta",
                   {"cells": int(self.hm.observed.sum()), "reason": "startup"})
        self._refresh_regions()
        self._emit_state("ready")

    def _refresh_regions(self) -> RegionExtraction:
        pose = self.executor.mid_pose()
        frame = render_depth(self.world, pose, self.config.camera_spec(),
                             self._camera_seed(), timestamp=self.sim_time,
                             base_z=self.executor.mid_z())
        self._camera_frames += 1
        t0 = time.perf_counter()
        self.hm.update_from_points(_frame_points(frame), timestamp=self.sim_time)
        self.timing.record("Height map update", time.perf_counter() - t0)
        extraction = extract_regions(frame, self.config.regions)
        self.regions = extraction
        self.ch_regions.post(extraction)
        self.timing.record(STAGE_REGIONS, extraction.compute_s)
        self._emit("regions", {
            "count": len(extraction.regions),
            "compute_s": round(extraction.compute_s, 4),
            "regions": [{
                "id": r.region_id,
                "normal": [round(float(v), 4) for v in r.plane_normal],
                "z": round(float(r.plane_point[2]), 4),
                "area": round(r.area, 4),
                "hull_xy": np.round(r.hull_world_xy(), 3).tolist(),
            } for r in extraction.regions],
        })
        if self.config.out_dir and self.config.dump_frames:
            ms = int(round(self.sim_time * 1000))
            out = Path(self.config.out_dir)
            write_depth_pgm(frame, out / f"depth_{ms}.pgm")
            write_regions_ppm(extraction, out / f"regions_{ms}.ppm")
        return extraction

    def _support_apron(self, stance: StanceState) -> PlanarRegion | None:
        """Synthetic level region under the feet, where the camera cannot look.

        Trust proprioception only when both soles agree on height, and extend
        the plane forward strip by strip until an observed cell disagrees.
        A stub apron is worse than none, so very short ones are dropped.
        """
        zl, zr = stance.left.z, stance.right.z
        if abs(zl - zr) > _APRON_LEVEL_TOL:
            return None
        z = 0.5 * (zl + zr)
        mid = stance.mid_pose()
        fwd = 0.0
        while fwd < _APRON_FORWARD - 1e-9:
            nxt = min(fwd + _APRON_STRIP, _APRON_FORWARD)
            if not self._strip_level(mid, fwd, nxt, z):
                break
            fwd = nxt
        if fwd < _APRON_MIN_FORWARD:
            return None
        c, s = math.cos(mid.yaw), math.sin(mid.yaw)
        local = [(-_APRON_BACK, -_APRON_HALF_WIDTH), (fwd, -_APRON_HALF_WIDTH),
                 (fwd, _APRON_HALF_WIDTH), (-_APRON_BACK, _APRON_HALF_WIDTH)]
        world = np.array([[mid.x + c * lx - s * ly, mid.y + s * lx + c * ly, z]
                          for lx, ly in local])
        point = np.array([mid.x, mid.y, z])
        normal = np.array([0.0, 0.0, 1.0])
        basis = np.column_stack(plane_basis(normal))
        hull = (world - point) @ basis
        return PlanarRegion(region_id=APRON_REGION_ID, plane_point=point,
                            plane_normal=normal, basis=basis, concave_hull=hull,
                            convex_polygons=(hull.copy(),), patch_count=0,
                            area=float((_APRON_BACK + fwd) * 2.0 * _APRON_HALF_WIDTH),
                            fit_rms=0.0)

    def _strip_level(self, mid: Pose2, x0: float, x1: float, z: float) -> bool:
        """True when no observed cell in the stance-frame strip contradicts z."""
        c, s = math.cos(mid.yaw), math.sin(mid.yaw)
        lx = 0.5 * (x0 + x1)
        for ly in np.arange(-_APRON_HALF_WIDTH, _APRON_HALF_WIDTH + 1e-9, _APRON_STRIP):
            h = self.hm.height_at(mid.x + c * lx - s * ly, mid.y + s * lx + c * ly)
            if not math.isnan(h) and abs(h - z) > _APRON_Z_TOL:
                return False
        return True

    def _planning_regions(self, stance: StanceState) -> tuple[PlanarRegion, ...]:
        extraction = self.ch_regions.take() or self.regions
        regions = list(extraction.regions) if extraction else []
        apron = self._support_apron(stance)
        if apron is not None:
            regions.append(apron)      # last, so sensed regions win area ties
        return tuple(regions)

    def _poll_corridor(self) -> None:
        if self.body_path is None or not self.impassibility_enabled:
            return
        t0 = time.perf_counter()
        cloud = render_lidar(self.world, self.executor.mid_pose(),
                             self.config.lidar_spec(), self._lidar_seed(),
                             timestamp=self.sim_time, base_z=self.executor.mid_z())
        self._lidar_frames += 1
        self.hm.update_from_points(cloud.points, timestamp=self.sim_time)
        self.timing.record("Height map update", time.perf_counter() - t0)
        self._emit("height_map", self.hm.snapshot(), to_replay=False)

        points = cloud.points
        if self._injected_obstacle is not None:
            points = np.vstack([points, self._injected_obstacle])
        mid = self.executor.mid_pose()
        progress = self.body_path.project(mid.x, mid.y)
        result = check_impassibility(points, self.body_path, progress, self.hm,
                                     ground_z_default=self.executor.mid_z(),
                                     params=self.config.impassibility)
        if result.blocked:
            self._clear_polls = 0
            self.ch_plan.inhibited = True
            if self.state in (STEPPING, FOOTSTEP_PLANNING, PERCEIVING,
                              FOOTSTEP_REVIEW):
                # the committed swing finishes on its own; nothing new starts
                self.executor.clear_pending()
                self._next_retry = None
                self._terminal_latch = False
                self._set_state(HALTED_IMPASSABLE,
                                f"corridor blocked ({result.count} points)")
        elif self.state == HALTED_IMPASSABLE:
            self._clear_polls += 1
            if self._clear_polls >= self.config.clear_polls_to_resume:
                self._resume_from_halt("corridor clear")

    def _resume_from_halt(self, note: str) -> None:
        self.ch_plan.inhibited = False
        self._clear_polls = 0
        self._set_state(PERCEIVING, note)
        self._footstep_cycle(reason="resume")

    # -- state and goal bookkeeping ----------------------------------------------

    def _set_state(self, state: str, note: str = "") -> None:
        if state != self.state:
            self._state_since = self.sim_time
        self.state = state
        self._emit_state(note)

    def _emit_state(self, note: str = "") -> None:
        mid = self.executor.mid_pose()
        data = {
            "state": self.state,
            "since": round(self._state_since, 4),
            "note": note,
            "pose": [round(mid.x, 4), round(mid.y, 4), round(mid.yaw, 4)],
            "z": round(self.executor.mid_z(), 4),
            "phase": self.executor.phase,
            "feet": {"left": self.executor.left.to_message(),
                     "right": self.executor.right.to_message()},
            "goal": ([self.goal.x, self.goal.y, self.goal.yaw]
                     if self.goal else None),
            "steps_taken": len(self._records),
            "distance_m": round(self._distance, 3),
            "reviews": {"body_path": self.reviews.body_path,
                        "footsteps": self.reviews.footsteps},
            "impassibility_enabled": self.impassibility_enabled,
            "robot_down": self._robot_down,
        }
        if self._next_retry is not None:
            data["retry_at"] = round(self._next_retry, 3)
        sw = self.executor.swing_foot_position()
        if sw is not None:
            data["swing_foot"] = [round(v, 4) for v in sw]
            data["swing_target"] = self.executor.active_step.to_message()
        self._emit("state", data)

    def _goal_pose_reached(self, stance: StanceState | None = None) -> bool:
        if self.goal is None:
            return False
        mid = stance.mid_pose() if stance is not None else self.executor.mid_pose()
        return (math.hypot(mid.x - self.goal.x, mid.y - self.goal.y)
                <= self.config.goal_xy_tol
                and abs(wrap_angle(mid.yaw - self.goal.yaw))
                <= self.config.goal_yaw_tol)

    def _reset_run_accounting(self) -> None:
        self._records.clear()
        self._swing_origins.clear()
        self._moved_since_goal.clear()
        self._distance = 0.0
        self._last_mid = self.executor.mid_pose()
        self._first_transfer_t = None
        self._next_retry = None
        self._retry_timeout = self.planner_params.timeout_s
        self._last_first_step = None
        self.plan_churn.clear()
        self._finishing = False
        self._terminal_latch = False
        self._terminal_boost = 1.0
        self.last_statistics = None
        self.pending_plan = None
        self.pending_body_path = None
        self.subgoal = None
        self.ch_plan.reset()
        self.executor.request_square_up(False)

    # -- goal flow -----------------------------------------------------------------

    def handle_goal(self, goal: Pose2) -> tuple[bool, str]:
        """Accept a goal, plan the body path once, and start the footstep loop."""
        if self._robot_down:
            return False, "robot is down; reset first"
        if self.state not in (IDLE, GOAL_REACHED):
            return False, f"goal rejected while {self.state}"
        if not self._started:
            self.start()
        self.goal = goal
        self.body_path = None
        self._reset_run_accounting()
        return self._plan_body_path_stage()

    def _plan_body_path_stage(self) -> tuple[bool, str]:
        self._set_state(BODY_PATH_PLANNING, "planning body path")
        mid = self.executor.mid_pose()
        self.hm.seed_disk(mid.x, mid.y, _SEED_DISK_RADIUS, self.executor.mid_z())
        t0 = time.perf_counter()
        try:
            path = plan_body_path(self.hm, mid, self.goal, self.body_path_params)
        except BodyPathError as err:
            self.goal = None
            self._emit("step_status", {"event": "goal_failed", "reason": str(err)})
            self._set_state(IDLE, f"body path failed: {err}")
            return False, f"body path: {err}"
        self.timing.record(STAGE_BODY_PATH, time.perf_counter() - t0)
        msg = path.to_message()
        msg["review"] = self.reviews.body_path
        self._emit("body_path", msg)
        if self.reviews.body_path:
            self.pending_body_path = path
            self._set_state(BODY_PATH_REVIEW, "awaiting body path review")
            return True, "body path awaiting review"
        self.body_path = path
        return self._begin_walk()

    def _begin_walk(self) -> tuple[bool, str]:
        self._set_state(PERCEIVING, "perceiving")
        if self._goal_pose_reached():
            self._request_finish()
            return True, "already at goal"
        self._footstep_cycle(reason="goal")
        if self.state == FOOTSTEP_REVIEW:
            return True, "footstep plan awaiting review"
        if self._next_retry is not None:
            return True, "accepted; initial plan failed, retrying"
        return True, "accepted"

    def handle_review(self, stage: str, approved: bool,
                      params: dict | None = None) -> tuple[bool, str]:
        """Operator verdict on the pending plan of one pipeline stage.

        A rejection re-runs the same stage, after applying any parameter
        edits, on the freshest map. Verdicts for a stage that is not actually
        waiting are ignored with a warning.
        """
        if stage == REVIEW_BODY_PATH:
            if self.state != BODY_PATH_REVIEW or self.pending_body_path is None:
                return False, f"no body path awaiting review (state {self.state})"
            if not approved:
                if params:
                    ok, err = self._apply_params(params)
                    if not ok:
                        return False, err
                self.pending_body_path = None
                ok, info = self._plan_body_path_stage()
                return ok, f"rejected; {info}"
            self.body_path = self.pending_body_path
            self.pending_body_path = None
            return self._begin_walk()

        if stage == REVIEW_FOOTSTEPS:
            if self.state != FOOTSTEP_REVIEW or self.pending_plan is None:
                return False, f"no footstep plan awaiting review (state {self.state})"
            if not approved:
                if params:
                    ok, err = self._apply_params(params)
                    if not ok:
                        return False, err
                self.pending_plan = None
                self._footstep_cycle(reason="review_reject")
                return True, "rejected; replanned"
            plan = self.pending_plan
            version = self._pending_plan_version
            self.pending_plan = None
            if self._gate_and_submit(plan, version):
                return True, "approved"
            return True, "approved; plan was stale, replanned"

        return False, f"unknown review stage {stage!r}"

    def set_review(self, stage: str, enabled: bool) -> tuple[bool, str]:
        # disabling a gate never auto-approves: a plan already waiting stays
        # waiting until an explicit verdict arrives
        if stage == REVIEW_BODY_PATH:
            self.reviews.body_path = bool(enabled)
        elif stage == REVIEW_FOOTSTEPS:
            self.reviews.footsteps = bool(enabled)
        else:
            return False, f"unknown review stage {stage!r}"
        self._emit_state(f"review {stage} {'on' if enabled else 'off'}")
        return True, f"review {stage} {'enabled' if enabled else 'disabled'}"

    def set_impassibility(self, enabled: bool) -> tuple[bool, str]:
        self.impassibility_enabled = bool(enabled)
        if not enabled:
            self.ch_plan.inhibited = False
            if self.state == HALTED_IMPASSABLE:
                self._resume_from_halt("impassibility check disabled")
            else:
                self._emit_state("impassibility check disabled")
        else:
            self._emit_state("impassibility check enabled")
        return True, f"impassibility check {'enabled' if enabled else 'disabled'}"

    def _apply_params(self, changes: dict) -> tuple[bool, str]:
        planner_c, body_c, trav_c = {}, {}, {}
        for key, value in changes.items():
            if key in _PLANNER_FIELDS:
                planner_c[key] = value
            elif key in _BODY_FIELDS:
                body_c[key] = value
            elif key in _TRAV_FIELDS:
                trav_c[key] = value
            else:
                return False, f"unknown parameter {key!r}"
        try:
            if planner_c:
                self.planner_params = self.planner_params.replace(**planner_c)
            if trav_c:
                body_c["trav"] = dataclasses.replace(self.body_path_params.trav,
                                                     **trav_c)
            if body_c:
                self.body_path_params = dataclasses.replace(self.body_path_params,
                                                            **body_c)
        except (TypeError, ValueError) as err:
            return False, f"bad parameter value: {err}"
        self._emit("step_status", {"event": "params_changed",
                                   "changed": sorted(changes)})
        return True, "parameters updated"

    def abort(self) -> tuple[bool, str]:
        """Drop the goal and stop feeding the executor; the active swing finishes."""
        self.executor.clear_pending()
        self.executor.request_square_up(False)
        self.goal = None
        self.body_path = None
        self._reset_run_accounting()
        self._set_state(IDLE, "aborted")
        return True, "aborted"

    def inject_fall(self) -> tuple[bool, str]:
        """Simulated fall: the walk dies instantly and everything resets to idle."""
        for ev in self.executor.force_fall():
            self._emit("step_status", ev.to_message())
        self._robot_down = True
        self.goal = None
        self.body_path = None
        self._reset_run_accounting()
        self.ch_regions.reset()
        self.ch_plan.reset()
        self._set_state(IDLE, "fell; reset required")
        return True, "fallen; reset required"

    def reset(self) -> tuple[bool, str]:
        """Stand the robot up in a nominal stance at its current location."""
        mid = self.executor.mid_pose()
        left, right = nominal_stance(
            mid,
            sample_height(self.world, *self._foot_xy(mid, LEFT)),
            sample_height(self.world, *self._foot_xy(mid, RIGHT)),
            self.planner_params)
        self.executor.stand_at(left, right)
        self._robot_down = False
        self.goal = None
        self.body_path = None
        self._reset_run_accounting()
        self._set_state(IDLE, "reset to standing")
        return True, "reset"

    def inject_obstacle(self, x: float, y: float, radius: float = 0.25,
                        points: int = 400) -> tuple[bool, str]:
        """Synthetic person-sized point cluster fed to the corridor check only."""
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
            entropy=[self.config.base_seed, _STREAM_OBSTACLE, self._tick])))
        ang = rng.uniform(0.0, 2.0 * math.pi, points)
        rr = radius * np.sqrt(rng.uniform(0.0, 1.0, points))
        base = sample_height(self.world, x, y)
        zz = base + rng.uniform(0.6, 1.7, points)
        self._injected_obstacle = np.stack(
            [x + rr * np.cos(ang), y + rr * np.sin(ang), zz], axis=1)
        self._emit("step_status", {"event": "obstacle_injected",
                                   "center": [x, y], "points": points})
        return True, "obstacle injected"

    def clear_obstacle(self) -> tuple[bool, str]:
        self._injected_obstacle = None
        self._emit("step_status", {"event": "obstacle_cleared"})
        return True, "obstacle cleared"

    # -- planning cycle ---------------------------------------------------------

    def _determine_subgoal(self, stance: StanceState) -> Pose2 | None:
        """Next carrot on the body path; None once the goal pose is met."""
        if self._goal_pose_reached(stance):
            return None
        mid = stance.mid_pose()
        s = self.body_path.project(mid.x, mid.y)
        advance = self.config.subgoal_advance
        probe = np.linspace(s, min(s + advance, self.body_path.length), 5)
        if max(self.body_path.curvature_at(float(v)) for v in probe) \
                > self.config.curvature_threshold:
            advance = self.config.subgoal_advance_curved
        if s + advance >= self.body_path.length - 1e-6:
            return self.body_path.goal
        return self.body_path.pose_at(s + advance)

    def _footstep_cycle(self, reason: str, timeout: float | None = None) -> None:
        """One perceive, plan, review-or-submit pass from the imminent stance."""
        if self.goal is None or self.body_path is None or self._finishing:
            return
        if self.state in (HALTED_IMPASSABLE, FOOTSTEP_REVIEW):
            return
        if self._terminal_latch:
            # the committed sequence already ends at the goal; replacing it
            # mid-walk can shuffle forever (stance repairs cost next to
            # nothing), so only re-validate the next landing against fresh
            # terrain and let the sequence run out
            queued = self.executor.pending
            if queued and self._step_still_valid(queued[0]):
                return
            if queued:
                self._terminal_latch = False    # next landing went invalid
            elif self.executor.walking():
                return                          # final swing; let it land
            else:
                self._terminal_latch = False    # drained; arrival check below
        walking = self.executor.walking()
        if not walking and self.state != PERCEIVING:
            self._set_state(PERCEIVING, reason)
        self._refresh_regions()
        stance = self.executor.imminent_stance()
        regions = self._planning_regions(stance)

        subgoal = self._determine_subgoal(stance)
        if subgoal is None:
            self._request_finish()
            return
        self.subgoal = subgoal

        if not walking:
            self._set_state(FOOTSTEP_PLANNING, reason)
        # a drained walk still anchors alternation on the last landed foot;
        # only a truly fresh stance leaves the side choice to the planner
        first_side = (self.executor.next_swing_side()
                      if walking or self.executor.steps_completed else None)
        endgame = subgoal == self.body_path.goal
        if timeout is None:
            timeout = (self.executor.expected_swing_remaining() if walking
                       else self.planner_params.timeout_s)
            if endgame and self._terminal_boost > 1.0:
                timeout = min(timeout * self._terminal_boost,
                              self.planner_params.timeout_s
                              * self.config.terminal_boost_cap)
        plan = plan_footsteps(regions, stance, subgoal, self.planner_params,
                              timeout_s=timeout, first_side=first_side)
        self.timing.record(STAGE_FOOTSTEPS, plan.duration_s)
        if endgame and plan.status == STATUS_PARTIAL:
            # a skewed stance can make the last stretch tie-heavy and wide;
            # escalate the budget like a failed plan so the full sequence
            # (and with it the terminal latch) still lands
            self._terminal_boost = min(self._terminal_boost * 2.0,
                                       self.config.terminal_boost_cap)
        elif plan.status == STATUS_FULL:
            self._terminal_boost = 1.0
        self._plan_count += 1
        if self.config.out_dir:
            write_plan_log(plan, Path(self.config.out_dir)
                           / f"plan_{self._plan_count:03d}.log")

        churn = None
        if plan.steps and self._last_first_step is not None:
            churn = math.hypot(plan.steps[0].x - self._last_first_step.x,
                               plan.steps[0].y - self._last_first_step.y)
            self.plan_churn.append(churn)
        if plan.steps:
            self._last_first_step = plan.steps[0]

        preview = plan.to_message()
        preview["reason"] = reason
        preview["timeout_s"] = round(timeout, 3)
        preview["review"] = self.reviews.footsteps and not plan.failed
        if churn is not None:
            preview["churn_m"] = round(churn, 4)
        self._emit("plan_preview", preview)

        if plan.failed:
            self._arm_retry()
            return
        if self.reviews.footsteps:
            self.pending_plan = plan
            self._pending_plan_version = self._world_version
            self._set_state(FOOTSTEP_REVIEW, "awaiting footstep review")
            return
        self._gate_and_submit(plan, self._world_version)

    def _gate_and_submit(self, plan: FootstepPlan, version: int) -> bool:
        """Submission gate: the blocked corridor inhibits, stale plans re-check."""
        self.ch_plan.post(plan)
        plan = self.ch_plan.take()
        if plan is None:
            self._emit("step_status", {"event": "plan_dropped",
                                       "reason": "corridor blocked"})
            return False
        if version < self._world_version and not self._plan_still_valid(plan):
            self._emit("step_status", {"event": "plan_dropped",
                                       "reason": "stale after terrain edit"})
            self._footstep_cycle(reason="stale_plan")
            return False
        if not self.executor.submit(plan.steps, replace=True):
            # the walk moved on while this plan waited; replan from fresh stance
            self._emit("step_status", {"event": "plan_dropped",
                                       "reason": "stance moved"})
            self._footstep_cycle(reason="resync")
            return False
        self._next_retry = None
        self._retry_timeout = self.planner_params.timeout_s
        self._terminal_latch = (plan.status == STATUS_FULL
                                and plan.subgoal == self.body_path.goal)
        self._emit("step_status", {"event": "plan_submitted",
                                   "steps": len(plan.steps),
                                   "status": plan.status})
        if self.state != STEPPING:
            self._set_state(STEPPING, "walking")
        return True

    def _plan_still_valid(self, plan: FootstepPlan) -> bool:
        if not plan.steps:
            return False
        return self._step_still_valid(plan.steps[0])

    def _step_still_valid(self, step: Footstep) -> bool:
        """Re-validate one committed step against the freshest regions."""
        self._refresh_regions()
        stance = self.executor.imminent_stance()
        regions = self._planning_regions(stance)
        snap = snap_to_regions(step.x, step.y, step.yaw, regions,
                               self.planner_params)
        if not snap.ok or abs(snap.z - step.z) > _APRON_LEVEL_TOL:
            return False
        if snap.fraction < self.planner_params.min_foothold_fraction:
            return False
        support = stance.foot(other_side(step.side))
        return check_transition(support, step, regions, self.planner_params) is None

    def _arm_retry(self) -> None:
        self._next_retry = self.sim_time + self.config.retry_period
        self._retry_timeout = min(
            self._retry_timeout * self.config.retry_timeout_scale,
            self.planner_params.timeout_s * self.config.retry_timeout_cap)
        self._emit("step_status", {"event": "plan_failed",
                                   "retry_at": round(self._next_retry, 3),
                                   "next_timeout_s": round(self._retry_timeout, 3)})

    def _request_finish(self) -> None:
        """Stop planning and square the feet; statistics close when that lands."""
        if self._finishing:
            return
        self._finishing = True
        self._next_retry = None
        self.executor.clear_pending()
        self.executor.request_square_up(True, width=self.planner_params.stance_width)
        self._emit("step_status", {"event": "squaring_up"})

    def _finalize_goal(self) -> None:
        duration = 0.0
        if self._first_transfer_t is not None:
            duration = self.sim_time - self._first_transfer_t
        stats = compute_run_statistics(self._records, self._distance, duration)
        self.last_statistics = stats
        self._emit("stats", stats.to_message())
        self._emit("timing", self._timing_message())
        if self.config.out_dir:
            out = Path(self.config.out_dir)
            write_statistics_file(stats, out / "statistics.txt")
            write_timing_file(self.timing, out / "timing.txt")
        self._finishing = False
        self.subgoal = None
        self._next_retry = None
        self._set_state(GOAL_REACHED, "goal reached")

    def _timing_message(self) -> dict:
        msg = self.timing.to_message()
        if self.plan_churn:
            msg["plan_churn_m"] = {
                "count": len(self.plan_churn),
                "mean": round(float(np.mean(self.plan_churn)), 4),
                "max": round(float(np.max(self.plan_churn)), 4),
            }
        return msg

    # -- step accounting ---------------------------------------------------------

    def _record_step(self, landed: Footstep) -> None:
        support = self.executor.stance().foot(other_side(landed.side))
        origin = self._swing_origins.get(landed.side, landed)
        contacts = [contact_info(self.world, f.x, f.y)
                    for f in (origin, support, landed)]
        category = classify_step([c[0] for c in contacts], [c[1] for c in contacts])
        reactive = bool(self._moved_since_goal) and self._foot_on_moved_block(landed)
        rec = StepRecord(index=len(self._records), step=landed,
                         t_swing_start=self.sim_time - self.config.timing.swing_s,
                         t_completed=self.sim_time, category=category,
                         reactive=reactive)
        self._records.append(rec)
        self._emit("step_status", {"event": "completed", "record": rec.to_message()})

    def _foot_on_moved_block(self, f: Footstep) -> bool:
        return support_block_id(self.world, f.x, f.y) in self._moved_since_goal

    # -- terrain edits -------------------------------------------------------------

    def _on_terrain_edited(self) -> None:
        """Re-validate the committed footing against the edited world.

        Only the next step to execute can be affected before the regular
        swing-half replan covers the rest: the not-yet-lifted transfer step
        (still replaceable) or the first pending one.
        """
        if self.goal is None or self._finishing:
            return
        if self.state not in (STEPPING, FOOTSTEP_REVIEW, FOOTSTEP_PLANNING):
            return
        target = None
        if self.executor.phase == TRANSFER and self.executor.active_step is not None:
            target = self.executor.active_step
        elif self.executor.pending:
            target = self.executor.pending[0]
        if target is None or self._step_still_valid(target):
            return
        self._emit("step_status", {"event": "step_invalidated",
                                   "step": target.to_message()})
        self.executor.clear_pending()
        self._terminal_latch = False
        if self.state == STEPPING:
            # a fresh submission also swaps out a still-in-transfer step
            self._footstep_cycle(reason="terrain_edit")

    # -- command dispatch ---------------------------------------------------------

    def _review_stage_arg(self, cmd: dict) -> str:
        stage = cmd.get("stage")
        if stage is None:
            stage = (REVIEW_BODY_PATH if self.state == BODY_PATH_REVIEW
                     else REVIEW_FOOTSTEPS)
        return stage

    def _run_command(self, cmd: dict) -> None:
        action = cmd.get("action")
        seq = cmd.get("seq")
        try:
            if action == "set_goal":
                g = cmd["goal"]
                ok, info = self.handle_goal(Pose2(float(g[0]), float(g[1]),
                                                  wrap_angle(float(g[2]))))
            elif action == "approve":
                ok, info = self.handle_review(self._review_stage_arg(cmd), True)
            elif action == "reject":
                ok, info = self.handle_review(self._review_stage_arg(cmd), False,
                                              params=cmd.get("params"))
            elif action == "set_review":
                ok, info = self.set_review(cmd["stage"], bool(cmd["enabled"]))
            elif action == "set_impassibility":
                ok, info = self.set_impassibility(bool(cmd["enabled"]))
            elif action == "set_params":
                ok, info = self._apply_params(dict(cmd["params"]))
            elif action in ("abort", "halt"):
                ok, info = self.abort()
            elif action == "reset":
                ok, info = self.reset()
            elif action == "inject_fall":
                ok, info = self.inject_fall()
            elif action == "inject_obstacle":
                c = cmd.get("center", [0.0, 0.0])
                ok, info = self.inject_obstacle(float(c[0]), float(c[1]),
                                                radius=float(cmd.get("radius", 0.25)),
                                                points=int(cmd.get("points", 400)))
            elif action == "clear_obstacle":
                ok, info = self.clear_obstacle()
            else:
                ok, info = False, f"unknown action {action!r}"
        except (KeyError, IndexError, TypeError, ValueError) as err:
            ok, info = False, f"bad command: {err}"
        self._emit("command_ack", {"action": action, "seq": seq,
                                   "ok": ok, "info": info})

    # -- main clock ---------------------------------------------------------------

    def tick(self) -> None:
        """Advance the simulation by one controller period."""
        self._tick += 1
        now = self.sim_time

        new_world = apply_edits(self.world, now)
        if new_world is not self.world:
            newly_moved = new_world.moved_block_ids - self.world.moved_block_ids
            self.world = new_world
            self._world_version += 1
            if self.goal is not None:
                self._moved_since_goal |= newly_moved
            self._emit("step_status", {"event": "terrain_edited",
                                       "moved": sorted(newly_moved)})
            self._on_terrain_edited()

        while self._commands:
            self._run_command(self._commands.popleft())

        for ev in self.executor.tick():
            self._emit("step_status", ev.to_message())
            if ev.kind == EV_TRANSFER_STARTED:
                if self._first_transfer_t is None and self.goal is not None:
                    self._first_transfer_t = ev.time_s
            elif ev.kind == EV_SWING_STARTED:
                self._swing_origins[ev.step.side] = \
                    self.executor.stance().foot(ev.step.side)
            elif ev.kind == EV_SWING_HALF:
                if self.state == STEPPING:
                    self._footstep_cycle(reason="swing_half")
            elif ev.kind == EV_STEP_COMPLETED:
                self._record_step(ev.step)
            elif ev.kind == EV_QUEUE_EMPTY:
                self._on_queue_empty()
            elif ev.kind == EV_SQUARED_UP:
                self._finalize_goal()

        if self.goal is not None and now >= self._next_poll and \
                self.state not in (BODY_PATH_PLANNING, BODY_PATH_REVIEW):
            self._next_poll = now + self.config.poll_period
            self._poll_corridor()

        if self.state in (STEPPING, FOOTSTEP_PLANNING) \
                and self._next_retry is not None and now >= self._next_retry:
            self._next_retry = None
            self._footstep_cycle(reason="retry", timeout=self._retry_timeout)

        if self.state in (IDLE, GOAL_REACHED) and now >= self._next_idle_perception:
            self._next_idle_perception = now + self.config.idle_perception_period
            if self._started:
                self._refresh_regions()

        mid = self.executor.mid_pose()
        if self.goal is not None and self._first_transfer_t is not None \
                and self.state != GOAL_REACHED:
            self._distance += math.hypot(mid.x - self._last_mid.x,
                                         mid.y - self._last_mid.y)
        self._last_mid = mid

        if self._tick % self.config.pose_decimation == 0:
            self._emit_state()

    def _on_queue_empty(self) -> None:
        """The walk stalled: no pending steps and no square-up armed."""
        if self.state != STEPPING or self.goal is None:
            return
        self._set_state(FOOTSTEP_PLANNING, "queue ran dry")
        if self._next_retry is None:
            self._footstep_cycle(reason="queue_empty")

    # -- convenience --------------------------------------------------------------

    def run_to_goal(self, goal: Pose2, max_sim_s: float = 240.0) -> bool:
        """Headless helper: submit a goal, auto-approve reviews, tick to the end."""
        if not self._started:
            self.start()
        ok, _info = self.handle_goal(goal)
        if not ok:
            return False
        deadline = self.sim_time + max_sim_s
        while self.sim_time < deadline:
            if self.state == BODY_PATH_REVIEW:
                self.handle_review(REVIEW_BODY_PATH, True)
            elif self.state == FOOTSTEP_REVIEW:
                self.handle_review(REVIEW_FOOTSTEPS, True)
            self.tick()
            if self.state == GOAL_REACHED:
                return True
            if self.state == IDLE:
                return False
        return False

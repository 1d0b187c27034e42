"""Continuous bipedal walking stack.

Simulated terrain and depth sensing feed planar-region extraction, body-path
and footstep planning, and a kinematics-only walking executor, coordinated by
an event-driven behavior engine with operator review checkpoints.
"""

__version__ = "0.1.0"

from .geometry import Pose2, wrap_angle
from .terrain import Block, Scenario, TerrainWorld, load_scenario
from .sensors import DepthCameraSpec, LidarSpec, DepthImage, render_depth, render_lidar, sensor_pose
from .regions import RegionParams, PlanarRegion, extract_regions
from .heightmap import (HeightMap, BodyPath, BodyPathParams, plan_body_path,
                        smooth_path)
from .footsteps import (PlannerParams, Footstep, FootstepPlan, StanceState,
                        plan_footsteps, snap_to_regions, check_transition,
                        wiggle, write_plan_log, format_rejection_summary)
from .executor import WalkTiming, WalkExecutor
from .engine import BehaviorEngine, BehaviorState, EngineConfig
from .telemetry import (RunStatistics, StageTiming, classify_step,
                        compute_run_statistics, read_replay)

__all__ = [
    "Pose2",
    "wrap_angle",
    "Block",
    "Scenario",
    "TerrainWorld",
    "load_scenario",
    "DepthCameraSpec",
    "LidarSpec",
    "DepthImage",
    "render_depth",
    "render_lidar",
    "sensor_pose",
    "RegionParams",
    "PlanarRegion",
    "extract_regions",
    "HeightMap",
    "BodyPath",
    "BodyPathParams",
    "plan_body_path",
    "smooth_path",
    "PlannerParams",
    "Footstep",
    "FootstepPlan",
    "StanceState",
    "plan_footsteps",
    "snap_to_regions",
    "check_transition",
    "wiggle",
    "write_plan_log",
    "format_rejection_summary",
    "WalkTiming",
    "WalkExecutor",
    "BehaviorEngine",
    "BehaviorState",
    "EngineConfig",
    "RunStatistics",
    "StageTiming",
    "classify_step",
    "compute_run_statistics",
    "read_replay",
]

"""Shared fixtures: synthetic regions, event capture, canned engine runs."""

import copy
import math
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from strider.engine import BehaviorEngine, EngineConfig
from strider.geometry import Pose2
from strider.regions import PlanarRegion
from strider.terrain import load_bundled_scenario


def flat_region(region_id: int, cx: float, cy: float, z: float,
                half_x: float, half_y: float, yaw: float = 0.0) -> PlanarRegion:
    """Analytic horizontal rectangle region, no perception involved."""
    c, s = math.cos(yaw), math.sin(yaw)
    basis = np.array([[c, -s], [s, c], [0.0, 0.0]])
    hull = np.array([[half_x, half_y], [-half_x, half_y],
                     [-half_x, -half_y], [half_x, -half_y]])
    return PlanarRegion(region_id=region_id,
                        plane_point=np.array([cx, cy, z]),
                        plane_normal=np.array([0.0, 0.0, 1.0]),
                        basis=basis,
                        concave_hull=hull,
                        convex_polygons=(hull.copy(),),
                        patch_count=64,
                        area=4.0 * half_x * half_y,
                        fit_rms=0.0)


class EventLog:
    """Collects everything an engine emits, queryable by kind."""

    def __init__(self, engine: BehaviorEngine):
        self.events: list[tuple[str, float, dict]] = []
        engine.subscribe(self._on)

    def _on(self, kind: str, sim_time: float, data) -> None:
        self.events.append((kind, sim_time, copy.deepcopy(data)))

    def of_kind(self, kind: str) -> list[tuple[float, dict]]:
        return [(t, d) for k, t, d in self.events if k == kind]

    def step_events(self, event: str) -> list[tuple[float, dict]]:
        return [(t, d) for k, t, d in self.events
                if k == "step_status" and d.get("event") == event]

    def states(self) -> list[str]:
        return [d["state"] for _, d in self.of_kind("state")]


def tick_until(engine: BehaviorEngine, pred, max_sim_s: float = 240.0,
               auto_approve: bool = True) -> bool:
    """Tick until pred() or the sim budget runs out. No wall pacing."""
    deadline = engine.sim_time + max_sim_s
    while engine.sim_time < deadline:
        if auto_approve:
            if engine.state == "body_path_review":
                engine.handle_review("body_path", True)
            elif engine.state == "footstep_review":
                engine.handle_review("footsteps", True)
        engine.tick()
        if pred():
            return True
    return False


def paced_until(engine: BehaviorEngine, pred, max_wall_s: float) -> float | None:
    """Tick at 1x realtime; wall seconds until pred() or None on budget."""
    t0 = time.perf_counter()
    sim0 = engine.sim_time
    while True:
        engine.tick()
        if pred():
            return time.perf_counter() - t0
        lag = (engine.sim_time - sim0) - (time.perf_counter() - t0)
        if lag > 0:
            time.sleep(lag)
        if time.perf_counter() - t0 > max_wall_s:
            return None


@dataclass
class RunResult:
    engine: BehaviorEngine
    log: EventLog
    reached: bool
    wall_s: float
    stats: dict = field(default_factory=dict)
    records: list = field(default_factory=list)

    @property
    def completions(self) -> list[tuple[float, dict]]:
        return self.log.step_events("step_completed")

    @property
    def swing_starts(self) -> list[tuple[float, dict]]:
        return self.log.step_events("swing_started")


def run_scenario(name: str, seed: int = 7, out_dir=None, **cfg) -> RunResult:
    """Run a bundled scenario to its goal, autonomous, unpaced."""
    scenario = load_bundled_scenario(name)
    config = EngineConfig(base_seed=seed, autonomous=True, out_dir=out_dir, **cfg)
    engine = BehaviorEngine(scenario, config)
    log = EventLog(engine)
    t0 = time.perf_counter()
    reached = engine.run_to_goal(scenario.goal)
    wall = time.perf_counter() - t0
    stats_msgs = log.of_kind("stats")
    stats = stats_msgs[-1][1] if stats_msgs else {}
    records = [d["record"] for _, d in log.step_events("completed")]
    engine.close()
    return RunResult(engine=engine, log=log, reached=reached,
                     wall_s=wall, stats=stats, records=records)


@pytest.fixture(scope="session")
def flat_run() -> RunResult:
    return run_scenario("flat")


@pytest.fixture(scope="session")
def rough_run() -> RunResult:
    return run_scenario("rough_22step")


def goal_of(name: str) -> Pose2:
    return load_bundled_scenario(name).goal

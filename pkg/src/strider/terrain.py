"""Ground-truth environment: block courses, height queries, and timed edits.

Blocks are convex prisms (vertical sides, optionally tilted top face), which
covers flat, raised-flat, and angled footholds without a mesh engine. World
snapshots are immutable; edits produce a new snapshot.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .geometry import Pose2, plane_basis, rot2

log = logging.getLogger(__name__)

SCENARIO_FORMAT_VERSION = 1
FLOOR_SOURCE_ID = -1
WORLD_PADDING_M = 2.0


class ScenarioError(ValueError):
    """Raised for scenario files that fail parsing or invariant checks."""


@dataclass(frozen=True)
class Block:
    """Convex prism foothold: vertical sides, tilted top allowed."""

    id: int
    center: np.ndarray          # (3,) meters
    extents: np.ndarray         # (3,) half-sizes, meters
    yaw: float = 0.0
    top_tilt: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self) -> None:
        for name in ("center", "extents", "top_tilt"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def validate(self) -> None:
        if not np.all(self.extents > 0.0):
            raise ScenarioError(f"block {self.id}: extents strictly positive")
        if abs(np.linalg.norm(self.top_tilt) - 1.0) > 1e-6:
            raise ScenarioError(f"block {self.id}: top_tilt must be a unit vector")
        if self.top_tilt[2] <= 0.0:
            raise ScenarioError(f"block {self.id}: top face must be upward-facing")
        # tilted top must stay above the bottom face across the footprint
        corners = self.footprint_corners()
        bottom = self.center[2] - self.extents[2]
        for cx, cy in corners:
            if self.top_z(cx, cy) <= bottom + 1e-9:
                raise ScenarioError(f"block {self.id}: top tilt cuts below the bottom face")

    def footprint_corners(self) -> np.ndarray:
        """CCW world XY corners of the prism footprint."""
        ex, ey = self.extents[0], self.extents[1]
        local = np.array([[ex, ey], [-ex, ey], [-ex, -ey], [ex, -ey]])
        return local @ rot2(self.yaw).T + self.center[:2]

    def covers(self, x: float, y: float, margin: float = 0.0) -> bool:
        d = rot2(-self.yaw) @ np.array([x - self.center[0], y - self.center[1]])
        return bool(abs(d[0]) <= self.extents[0] + margin and abs(d[1]) <= self.extents[1] + margin)

    def top_z(self, x: float, y: float) -> float:
        """Height of the (possibly tilted) top plane at world (x, y)."""
        n = self.top_tilt
        tc = self.top_center()
        return float(tc[2] - (n[0] * (x - tc[0]) + n[1] * (y - tc[1])) / n[2])

    def top_center(self) -> np.ndarray:
        return self.center + np.array([0.0, 0.0, float(self.extents[2])])

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """Prism as intersection of half-spaces n.x <= d: 4 sides, bottom, top."""
        R = rot2(self.yaw)
        ux = np.array([R[0, 0], R[1, 0], 0.0])
        uy = np.array([R[0, 1], R[1, 1], 0.0])
        normals = np.stack([ux, -ux, uy, -uy, np.array([0.0, 0.0, -1.0]), self.top_tilt])
        c = self.center
        offsets = np.array(
            [
                float(np.dot(ux, c)) + self.extents[0],
                float(np.dot(-ux, c)) + self.extents[0],
                float(np.dot(uy, c)) + self.extents[1],
                float(np.dot(-uy, c)) + self.extents[1],
                -(c[2] - self.extents[2]),
                float(np.dot(self.top_tilt, self.top_center())),
            ]
        )
        return normals, offsets


@dataclass(frozen=True)
class TerrainEdit:
    time_s: float
    action: str                 # "add" | "remove"
    block: Block | None = None  # required for add
    block_id: int | None = None # required for remove


@dataclass(frozen=True)
class GroundTruthSurface:
    """A walkable plane patch: block top face or the floor."""

    plane_point: np.ndarray
    plane_normal: np.ndarray
    polygon: np.ndarray         # convex 2D polygon in plane frame
    source_block: int           # block id, FLOOR_SOURCE_ID for the floor

    def to_world(self) -> np.ndarray:
        """Polygon vertices lifted back into world coordinates."""
        u, v = plane_basis(self.plane_normal)
        return self.plane_point + np.outer(self.polygon[:, 0], u) + np.outer(self.polygon[:, 1], v)


@dataclass(frozen=True)
class Scenario:
    name: str
    blocks: tuple[Block, ...]
    floor_z: float
    edits: tuple[TerrainEdit, ...]
    goal: Pose2
    robot_start: Pose2

    def validate(self) -> None:
        ids = [b.id for b in self.blocks]
        if len(ids) != len(set(ids)):
            raise ScenarioError("duplicate block ids")
        for b in self.blocks:
            b.validate()
        times = [e.time_s for e in self.edits]
        if any(t < 0.0 for t in times):
            raise ScenarioError("edit times must be non-negative")
        if list(times) != sorted(times):
            raise ScenarioError("edits must be sorted by time")
        for e in self.edits:
            if e.action not in ("add", "remove"):
                raise ScenarioError(f"edit action must be add or remove, got {e.action!r}")
            if e.action == "add":
                if e.block is None:
                    raise ScenarioError("add edit requires a block")
                e.block.validate()
            elif e.block_id is None:
                raise ScenarioError("remove edit requires block_id")
        bounds = _bounds_for(self.blocks, self.goal, self.robot_start, self.floor_z)
        for label, pose in (("goal", self.goal), ("robot_start", self.robot_start)):
            if not (bounds[0] <= pose.x <= bounds[2] and bounds[1] <= pose.y <= bounds[3]):
                raise ScenarioError(f"{label} lies outside world bounds")


def _bounds_for(blocks, goal: Pose2, start: Pose2, floor_z: float) -> tuple[float, float, float, float]:
    xs = [goal.x, start.x]
    ys = [goal.y, start.y]
    for b in blocks:
        fc = b.footprint_corners()
        xs += [fc[:, 0].min(), fc[:, 0].max()]
        ys += [fc[:, 1].min(), fc[:, 1].max()]
    return (
        min(xs) - WORLD_PADDING_M,
        min(ys) - WORLD_PADDING_M,
        max(xs) + WORLD_PADDING_M,
        max(ys) + WORLD_PADDING_M,
    )


@dataclass(frozen=True)
class TerrainWorld:
    """Immutable world snapshot. apply_edits returns a new snapshot."""

    scenario: Scenario
    blocks: tuple[Block, ...]
    floor_z: float
    bounds: tuple[float, float, float, float]   # xmin, ymin, xmax, ymax
    edits_applied: int = 0
    moved_block_ids: frozenset[int] = frozenset()

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "TerrainWorld":
        scenario.validate()
        bounds = _bounds_for(scenario.blocks, scenario.goal, scenario.robot_start, scenario.floor_z)
        return cls(scenario=scenario, blocks=tuple(scenario.blocks), floor_z=scenario.floor_z, bounds=bounds)

    def in_bounds(self, x: float, y: float) -> bool:
        return self.bounds[0] <= x <= self.bounds[2] and self.bounds[1] <= y <= self.bounds[3]

    def block_by_id(self, block_id: int) -> Block | None:
        for b in self.blocks:
            if b.id == block_id:
                return b
        return None


def sample_height(world: TerrainWorld, x: float, y: float) -> float:
    """Max top-surface height over blocks covering (x, y), else the floor."""
    if not world.in_bounds(x, y):
        log.warning("height query (%.2f, %.2f) outside world bounds", x, y)
        return world.floor_z
    z = world.floor_z
    for b in world.blocks:
        if b.covers(x, y):
            z = max(z, b.top_z(x, y))
    return z


def support_block_id(world: TerrainWorld, x: float, y: float) -> int:
    """Id of the block whose top supports (x, y), or FLOOR_SOURCE_ID."""
    best = FLOOR_SOURCE_ID
    z = world.floor_z
    for b in world.blocks:
        if b.covers(x, y):
            top = b.top_z(x, y)
            if top >= z:
                z = top
                best = b.id
    return best


def apply_edits(world: TerrainWorld, sim_time: float) -> TerrainWorld:
    """Apply every pending edit with time <= sim_time (inclusive), exactly once."""
    edits = world.scenario.edits
    i = world.edits_applied
    if i >= len(edits) or edits[i].time_s > sim_time:
        return world
    blocks = list(world.blocks)
    moved = set(world.moved_block_ids)
    while i < len(edits) and edits[i].time_s <= sim_time:
        e = edits[i]
        if e.action == "add":
            blocks.append(e.block)
            moved.add(e.block.id)
        else:
            match = [b for b in blocks if b.id == e.block_id]
            if not match:
                raise ScenarioError(f"edit removes unknown block id {e.block_id}")
            blocks.remove(match[0])
            moved.add(e.block_id)
        i += 1
    return replace(world, blocks=tuple(blocks), edits_applied=i, moved_block_ids=frozenset(moved))


def ground_truth_surfaces(world: TerrainWorld) -> list[GroundTruthSurface]:
    """Walkable planes: one per block top plus the floor rectangle."""
    surfaces = []
    xmin, ymin, xmax, ymax = world.bounds
    floor_pt = np.array([(xmin + xmax) / 2.0, (ymin + ymax) / 2.0, world.floor_z])
    hw = (xmax - xmin) / 2.0
    hh = (ymax - ymin) / 2.0
    floor_poly = np.array([[hw, hh], [-hw, hh], [-hw, -hh], [hw, -hh]])
    surfaces.append(
        GroundTruthSurface(
            plane_point=floor_pt,
            plane_normal=np.array([0.0, 0.0, 1.0]),
            polygon=floor_poly,
            source_block=FLOOR_SOURCE_ID,
        )
    )
    for b in world.blocks:
        corners = b.footprint_corners()
        pts3 = np.array([[cx, cy, b.top_z(cx, cy)] for cx, cy in corners])
        origin = pts3.mean(axis=0)
        u, v = plane_basis(b.top_tilt)
        d = pts3 - origin
        poly = np.stack([d @ u, d @ v], axis=1)
        surfaces.append(
            GroundTruthSurface(
                plane_point=origin,
                plane_normal=b.top_tilt.copy(),
                polygon=poly,
                source_block=b.id,
            )
        )
    return surfaces


def export_surfaces_text(world: TerrainWorld) -> str:
    """Polygon-soup debug dump of the ground-truth surfaces for the console."""
    lines = ["# ground truth surfaces v1"]
    for s in ground_truth_surfaces(world):
        w = s.to_world()
        coords = " ".join(f"{p[0]:.4f},{p[1]:.4f},{p[2]:.4f}" for p in w)
        lines.append(f"surface block={s.source_block} n={len(w)} {coords}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# scenario files (.scn, YAML key/value + lists; see docs in README)


def _parse_pose(raw, label: str) -> Pose2:
    try:
        return Pose2(float(raw["x"]), float(raw["y"]), float(raw.get("yaw", 0.0)))
    except (KeyError, TypeError) as e:
        raise ScenarioError(f"{label}: expected mapping with x/y/yaw ({e})") from None


def _parse_block(raw, where: str) -> Block:
    try:
        tilt = np.asarray(raw.get("top_tilt", [0.0, 0.0, 1.0]), dtype=float)
        n = np.linalg.norm(tilt)
        if n > 0.0:
            tilt = tilt / n
        return Block(
            id=int(raw["id"]),
            center=np.asarray(raw["center"], dtype=float),
            extents=np.asarray(raw["extents"], dtype=float),
            yaw=float(raw.get("yaw", 0.0)),
            top_tilt=tilt,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ScenarioError(f"{where}: bad block definition ({e})") from None


def parse_scenario(text: str, name_hint: str = "scenario") -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark else ""
        raise ScenarioError(f"scenario parse error{where}: {e}") from None
    if not isinstance(raw, dict):
        raise ScenarioError("scenario file must be a mapping")
    version = raw.get("version", SCENARIO_FORMAT_VERSION)
    if version != SCENARIO_FORMAT_VERSION:
        raise ScenarioError(f"unsupported scenario version {version}")
    blocks = tuple(_parse_block(b, f"blocks[{i}]") for i, b in enumerate(raw.get("blocks") or []))
    edits = []
    for i, e in enumerate(raw.get("edits") or []):
        action = e.get("action")
        edits.append(
            TerrainEdit(
                time_s=float(e.get("time", -1.0)),
                action=action,
                block=_parse_block(e["block"], f"edits[{i}]") if action == "add" else None,
                block_id=int(e["block_id"]) if action == "remove" else None,
            )
        )
    if "goal" not in raw or "robot_start" not in raw:
        raise ScenarioError("scenario requires goal and robot_start")
    scenario = Scenario(
        name=str(raw.get("name", name_hint)),
        blocks=blocks,
        floor_z=float(raw.get("floor_z", 0.0)),
        edits=tuple(edits),
        goal=_parse_pose(raw["goal"], "goal"),
        robot_start=_parse_pose(raw["robot_start"], "robot_start"),
    )
    scenario.validate()
    return scenario


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    import os

    return parse_scenario(text, name_hint=os.path.splitext(os.path.basename(path))[0])


def scenario_to_dict(s: Scenario) -> dict:
    def block_dict(b: Block) -> dict:
        return {
            "id": b.id,
            "center": [float(v) for v in b.center],
            "extents": [float(v) for v in b.extents],
            "yaw": float(b.yaw),
            "top_tilt": [float(v) for v in b.top_tilt],
        }

    out = {
        "version": SCENARIO_FORMAT_VERSION,
        "name": s.name,
        "floor_z": s.floor_z,
        "robot_start": {"x": s.robot_start.x, "y": s.robot_start.y, "yaw": s.robot_start.yaw},
        "goal": {"x": s.goal.x, "y": s.goal.y, "yaw": s.goal.yaw},
        "blocks": [block_dict(b) for b in s.blocks],
    }
    if s.edits:
        out["edits"] = [
            {
                "time": e.time_s,
                "action": e.action,
                **({"block": block_dict(e.block)} if e.action == "add" else {"block_id": e.block_id}),
            }
            for e in s.edits
        ]
    return out


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(scenario_to_dict(s), f, sort_keys=False)


def bundled_scenario_path(name: str):
    """Path to a scenario shipped with the package (e.g. 'flat', 'rough_22step')."""
    from importlib import resources

    fname = name if name.endswith(".scn") else f"{name}.scn"
    ref = resources.files("strider").joinpath("scenarios").joinpath(fname)
    if not ref.is_file():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return ref


def load_bundled_scenario(name: str) -> Scenario:
    ref = bundled_scenario_path(name)
    return parse_scenario(ref.read_text(encoding="utf-8"), name_hint=name)

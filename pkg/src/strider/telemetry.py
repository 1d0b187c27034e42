"""Run accounting: step taxonomy, summary statistics, stage timing, replay log.

The replay file is JSONL with a per-line CRC32 prefix and a flush after every
record, so a run killed mid-write still leaves a valid prefix to load. The
statistics and timing files are small fixed-format tables meant for diffing
across runs.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .footsteps import Footstep
from .terrain import FLOOR_SOURCE_ID, TerrainWorld, sample_height, support_block_id

STEP_FLAT = "flat"
STEP_UNEVEN = "uneven_flat"
STEP_ROUGH = "rough"

LEVEL_TOL_DEG = 3.0
COPLANAR_TOL = 0.01


def contact_info(world: TerrainWorld, x: float, y: float) -> tuple[np.ndarray, float]:
    """Ground-truth surface normal and height under a foot center."""
    z = sample_height(world, x, y)
    bid = support_block_id(world, x, y)
    if bid == FLOOR_SOURCE_ID:
        return np.array([0.0, 0.0, 1.0]), z
    return world.block_by_id(bid).top_tilt.copy(), z


def classify_step(normals, zs) -> str:
    """Taxonomy of one step from its three contact surfaces.

    normals and zs cover the swing foot's origin, the support foot, and the
    landing, in any order. All surfaces near-level and near-coplanar is a flat
    step; level but offset is uneven flat; any tilted surface makes it rough.
    """
    normals = np.asarray(normals, dtype=float)
    zs = np.asarray(zs, dtype=float)
    cos_tol = math.cos(math.radians(LEVEL_TOL_DEG))
    level = bool((normals[:, 2] >= cos_tol).all())
    if not level:
        return STEP_ROUGH
    if zs.max() - zs.min() <= COPLANAR_TOL:
        return STEP_FLAT
    return STEP_UNEVEN


@dataclass(frozen=True)
class StepRecord:
    index: int
    step: Footstep
    t_swing_start: float
    t_completed: float
    category: str
    reactive: bool

    def to_message(self) -> dict:
        return {"index": self.index, "step": self.step.to_message(),
                "t_swing_start": round(self.t_swing_start, 4),
                "t_completed": round(self.t_completed, 4),
                "category": self.category, "reactive": self.reactive}


@dataclass(frozen=True)
class RunStatistics:
    total_steps: int
    flat: int
    uneven_flat: int
    rough: int
    reactive: int
    duration_s: float
    distance_m: float

    @property
    def avg_speed(self) -> float:
        return self.distance_m / self.duration_s if self.duration_s > 0 else 0.0

    @property
    def avg_step_length(self) -> float:
        return self.distance_m / self.total_steps if self.total_steps > 0 else 0.0

    def to_message(self) -> dict:
        return {"total_steps": self.total_steps, "flat": self.flat,
                "uneven_flat": self.uneven_flat, "rough": self.rough,
                "reactive": self.reactive, "duration_s": round(self.duration_s, 1),
                "distance_m": round(self.distance_m, 2),
                "avg_speed": round(self.avg_speed, 3),
                "avg_step_length": round(self.avg_step_length, 3)}


def compute_run_statistics(records, distance_m: float, duration_s: float) -> RunStatistics:
    recs = list(records)
    by = {STEP_FLAT: 0, STEP_UNEVEN: 0, STEP_ROUGH: 0}
    reactive = 0
    for r in recs:
        by[r.category] += 1
        if r.reactive:
            reactive += 1
    return RunStatistics(total_steps=len(recs), flat=by[STEP_FLAT],
                         uneven_flat=by[STEP_UNEVEN], rough=by[STEP_ROUGH],
                         reactive=reactive, duration_s=duration_s,
                         distance_m=distance_m)


_STAT_HEADER = ("Total steps|Flat|Uneven flat|Rough|Reactive|Duration (s)|"
                "Distance (m)|Avg. speed (m/s)|Avg. step length (m)")


def format_statistics(stats: RunStatistics) -> str:
    row = "|".join([
        str(stats.total_steps), str(stats.flat), str(stats.uneven_flat),
        str(stats.rough), str(stats.reactive),
        f"{stats.duration_s:.1f}", f"{stats.distance_m:.2f}",
        f"{stats.avg_speed:.3f}", f"{stats.avg_step_length:.3f}",
    ])
    return _STAT_HEADER + "\n" + row + "\n"


def write_statistics_file(stats: RunStatistics, path) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write(format_statistics(stats))


STAGE_REGIONS = "Rapid regions"
STAGE_FOOTSTEPS = "Footstep planning"
STAGE_BODY_PATH = "Body path"


class StageTiming:
    """Per-stage duration samples with streaming mean and standard deviation.

    Raw samples are kept (runs are thousands of samples at most) so medians
    and batch recomputation checks stay possible; the running moments use
    Welford's update.
    """

    def __init__(self):
        self._welford: dict[str, list[float]] = {}  # n, mean, m2
        self._samples: dict[str, list[float]] = {}

    def record(self, stage: str, seconds: float) -> None:
        if seconds < 0.0:
            raise ValueError("duration must be non-negative")
        st = self._welford.setdefault(stage, [0, 0.0, 0.0])
        st[0] += 1
        delta = seconds - st[1]
        st[1] += delta / st[0]
        st[2] += delta * (seconds - st[1])
        self._samples.setdefault(stage, []).append(seconds)

    def samples(self, stage: str) -> list[float]:
        return list(self._samples.get(stage, ()))

    def median(self, stage: str) -> float:
        vals = self._samples.get(stage)
        if not vals:
            return 0.0
        return float(np.median(vals))

    def summary(self) -> dict[str, tuple[int, float, float]]:
        out = {}
        for stage, (n, mean, m2) in sorted(self._welford.items()):
            std = math.sqrt(m2 / n) if n > 0 else 0.0
            out[stage] = (n, mean, std)
        return out

    def to_message(self) -> dict:
        return {stage: {"count": n, "mean_s": round(mean, 4), "std_s": round(std, 4),
                        "median_s": round(self.median(stage), 4)}
                for stage, (n, mean, std) in self.summary().items()}


def format_timing(timing: StageTiming) -> str:
    """Stage durations as a mean-plus-minus-stddev table, one part per row."""
    lines = ["Part|Duration (s)"]
    for stage, (_n, mean, std) in timing.summary().items():
        lines.append(f"{stage}|{mean:.3f} ± {std:.4f}")
    return "\n".join(lines) + "\n"


def write_timing_file(timing: StageTiming, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_timing(timing))


class ReplayWriter:
    """Append-only event log where any byte-truncated prefix still loads."""

    def __init__(self, path):
        self._f = open(path, "w", encoding="ascii")

    def write(self, kind: str, sim_time: float, data) -> None:
        body = json.dumps({"t": round(sim_time, 4), "kind": kind, "data": data},
                          separators=(",", ":"), sort_keys=True)
        crc = zlib.crc32(body.encode("ascii")) & 0xFFFFFFFF
        self._f.write(f"{crc:08x} {body}\n")
        self._f.flush()

    def close(self) -> None:
        if not self._f.closed:
            self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_replay(path) -> list[dict]:
    """Load every intact record; stops quietly at the first damaged line."""
    out = []
    with open(path, "r", encoding="ascii") as f:
        for line in f:
            if len(line) < 10 or line[8] != " " or not line.endswith("\n"):
                break
            body = line[9:-1]
            try:
                crc = int(line[:8], 16)
            except ValueError:
                break
            if zlib.crc32(body.encode("ascii")) & 0xFFFFFFFF != crc:
                break
            out.append(json.loads(body))
    return out

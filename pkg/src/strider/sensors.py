"""Ray-cast simulation of the two terrain sensors.

A dense forward depth camera on the lower torso (pitched down, short range)
and a sparse 360 degree lidar on the torso top (long range). Both are pure
functions of (world snapshot, robot pose, seed), so callers may invoke them
concurrently. CPU implementation; rays are vectorized per block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import Pose2, Pose3, rotz
from .terrain import TerrainWorld

# Mount heights above mid-feet. The depth camera sits on the lower torso (it
# gains accuracy low, losing field of view); the lidar rides the torso top.
CAMERA_MOUNT_HEIGHT_M = 0.95
LIDAR_MOUNT_HEIGHT_M = 1.45

# Downward tilt of the camera optical axis from horizontal. With the 55
# degree vertical field the ground is imaged from about 0.3 m ahead of the
# feet out to 3 m: the whole band the next few footholds come from. Only the
# soles themselves and the floor behind them stay out of view.
CAMERA_MOUNT_PITCH_DEG = 45.0


@dataclass(frozen=True)
class DepthCameraSpec:
    width: int = 320
    height: int = 240
    fov_h_deg: float = 70.0
    fov_v_deg: float = 55.0
    max_range: float = 9.0
    rate_hz: float = 30.0
    mount_pitch_deg: float = CAMERA_MOUNT_PITCH_DEG
    mount_height: float = CAMERA_MOUNT_HEIGHT_M
    noise_near: float = 0.005   # stddev at zero range
    noise_far: float = 0.014    # stddev at max range

    def __post_init__(self):
        if self.width * self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if not (0.0 < self.fov_h_deg < 180.0 and 0.0 < self.fov_v_deg < 180.0):
            raise ValueError("fov must be in (0, 180) degrees")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")

    def noise_stddev_at(self, r: np.ndarray) -> np.ndarray:
        frac = np.clip(np.asarray(r, dtype=float) / self.max_range, 0.0, 1.0)
        return self.noise_near + (self.noise_far - self.noise_near) * frac


FULL_CAMERA_SPEC = DepthCameraSpec(width=1024, height=768)


@dataclass(frozen=True)
class LidarSpec:
    channels: int = 128
    points_per_rev: int = 512
    fov_v_deg: float = 90.0     # symmetric about horizontal
    max_range: float = 50.0
    rate_hz: float = 10.0
    precision_near: float = 0.015
    precision_far: float = 0.050
    mount_height: float = LIDAR_MOUNT_HEIGHT_M

    def __post_init__(self):
        if self.channels <= 0:
            raise ValueError("channels must be positive")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")

    def noise_stddev_at(self, r: np.ndarray) -> np.ndarray:
        frac = np.clip(np.asarray(r, dtype=float) / self.max_range, 0.0, 1.0)
        return self.precision_near + (self.precision_far - self.precision_near) * frac


FULL_LIDAR_SPEC = LidarSpec(points_per_rev=1024)


@dataclass(frozen=True)
class DepthImage:
    spec: DepthCameraSpec
    sensor_pose: Pose3
    timestamp: float
    depths: np.ndarray          # (H, W) range along the ray, 0 = invalid

    def valid_mask(self) -> np.ndarray:
        return self.depths > 0.0

    def back_project(self) -> np.ndarray:
        """World-frame 3D point per pixel, (H, W, 3); invalid pixels are NaN."""
        dirs = _camera_ray_dirs(self.spec) @ self.sensor_pose.rotation.T
        pts = self.sensor_pose.position + dirs * self.depths[:, :, None]
        pts[~self.valid_mask()] = np.nan
        return pts


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray          # (N, 3) world frame
    timestamp: float


def sensor_pose(robot_pose: Pose2, which: str, base_z: float = 0.0,
                camera: DepthCameraSpec | None = None,
                lidar: LidarSpec | None = None) -> Pose3:
    """Mounted sensor pose for a robot planar pose (mid-feet at base_z)."""
    if which == "camera":
        spec = camera or DepthCameraSpec()
        p = math.radians(spec.mount_pitch_deg)
        Rz = rotz(robot_pose.yaw)
        axis = Rz @ np.array([math.cos(p), 0.0, -math.sin(p)])
        right = Rz @ np.array([0.0, -1.0, 0.0])
        down = np.cross(axis, right)
        rotation = np.stack([right, down, axis], axis=1)
        position = np.array([robot_pose.x, robot_pose.y, base_z + spec.mount_height])
        return Pose3(position=position, rotation=rotation)
    if which == "lidar":
        spec = lidar or LidarSpec()
        position = np.array([robot_pose.x, robot_pose.y, base_z + spec.mount_height])
        return Pose3(position=position, rotation=rotz(robot_pose.yaw))
    raise ValueError(f"unknown sensor {which!r}")


@lru_cache(maxsize=8)
def _camera_dirs_cached(width: int, height: int, fov_h: float, fov_v: float) -> np.ndarray:
    tan_h = math.tan(math.radians(fov_h) / 2.0)
    tan_v = math.tan(math.radians(fov_v) / 2.0)
    u = (np.arange(width) + 0.5 - width / 2.0) / (width / 2.0) * tan_h
    v = (np.arange(height) + 0.5 - height / 2.0) / (height / 2.0) * tan_v
    uu, vv = np.meshgrid(u, v)
    dirs = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return dirs


def _camera_ray_dirs(spec: DepthCameraSpec) -> np.ndarray:
    """Unit ray directions in the camera frame (x right, y down, z optical axis)."""
    return _camera_dirs_cached(spec.width, spec.height, spec.fov_h_deg, spec.fov_v_deg)


@lru_cache(maxsize=8)
def _lidar_dirs_cached(channels: int, points_per_rev: int, fov_v: float) -> np.ndarray:
    # elevation sweeps top-down, azimuth counter-clockwise from +x
    el = np.radians(np.linspace(fov_v / 2.0, -fov_v / 2.0, channels))
    az = np.linspace(0.0, 2.0 * math.pi, points_per_rev, endpoint=False)
    ee, aa = np.meshgrid(el, az, indexing="ij")
    dirs = np.stack([np.cos(ee) * np.cos(aa), np.cos(ee) * np.sin(aa), np.sin(ee)], axis=-1)
    return dirs.reshape(-1, 3)


def _raycast(world: TerrainWorld, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Nearest hit range per unit ray direction; inf where nothing is hit.

    Blocks are intersected as half-space slabs; the floor is an infinite plane.
    """
    flat = dirs.reshape(-1, 3)
    t_best = np.full(len(flat), np.inf)

    dz = flat[:, 2]
    below = dz < -1e-12
    t_floor = np.where(below, (world.floor_z - origin[2]) / np.where(below, dz, 1.0), np.inf)
    np.minimum(t_best, np.where(t_floor > 0.0, t_floor, np.inf), out=t_best)

    for block in world.blocks:
        normals, offsets = block.halfspaces()
        ndotv = flat @ normals.T                       # (N, 6)
        ndoto = normals @ origin                       # (6,)
        margin = offsets - ndoto                       # positive when origin inside
        with np.errstate(divide="ignore", invalid="ignore"):
            t_plane = margin / ndotv
        t_lo = np.where(ndotv < -1e-12, t_plane, -np.inf)
        t_hi = np.where(ndotv > 1e-12, t_plane, np.inf)
        # rays parallel to a violated plane never enter
        parallel_out = (np.abs(ndotv) <= 1e-12) & (margin < 0.0)
        t_enter = t_lo.max(axis=1)
        t_exit = np.where(parallel_out.any(axis=1), -np.inf, t_hi.min(axis=1))
        hit = (t_enter <= t_exit) & (t_exit > 0.0) & (t_enter > 1e-9)
        np.minimum(t_best, np.where(hit, t_enter, np.inf), out=t_best)

    return t_best.reshape(dirs.shape[:-1])


def render_depth(world: TerrainWorld, robot_pose: Pose2, spec: DepthCameraSpec,
                 seed: int, timestamp: float = 0.0, base_z: float = 0.0) -> DepthImage:
    """Simulate one depth frame: nearest-hit ranges plus range-dependent noise.

    Deterministic for a given seed. Misses and returns beyond max_range encode
    as 0 (invalid).
    """
    pose = sensor_pose(robot_pose, "camera", base_z=base_z, camera=spec)
    dirs = _camera_ray_dirs(spec) @ pose.rotation.T
    ranges = _raycast(world, pose.position, dirs)
    valid = np.isfinite(ranges) & (ranges <= spec.max_range)
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.standard_normal(ranges.shape) * spec.noise_stddev_at(np.where(valid, ranges, 0.0))
    depths = np.where(valid, np.clip(ranges + noise, 1e-6, spec.max_range), 0.0)
    return DepthImage(spec=spec, sensor_pose=pose, timestamp=timestamp, depths=depths)


def render_lidar(world: TerrainWorld, robot_pose: Pose2, spec: LidarSpec,
                 seed: int, timestamp: float = 0.0, base_z: float = 0.0) -> PointCloud:
    """Simulate one lidar revolution as an instantaneous snapshot of hit points."""
    pose = sensor_pose(robot_pose, "lidar", base_z=base_z, lidar=spec)
    dirs = _lidar_dirs_cached(spec.channels, spec.points_per_rev, spec.fov_v_deg) @ pose.rotation.T
    ranges = _raycast(world, pose.position, dirs)
    valid = np.isfinite(ranges) & (ranges <= spec.max_range)
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.standard_normal(ranges.shape) * spec.noise_stddev_at(np.where(valid, ranges, 0.0))
    noisy = ranges + noise
    pts = pose.position + dirs[valid] * noisy[valid][:, None]
    return PointCloud(points=pts, timestamp=timestamp)


def write_depth_pgm(image: DepthImage, path) -> None:
    """Dump a frame as a range-scaled 16-bit PGM (invalid pixels map to 0)."""
    scale = 65535.0 / image.spec.max_range
    gray = np.round(image.depths * scale).astype(">u2")
    with open(path, "wb") as f:
        f.write(f"P5\n{image.spec.width} {image.spec.height}\n65535\n".encode("ascii"))
        f.write(gray.tobytes())

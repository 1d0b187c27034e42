"""Simulated depth camera and lidar against analytic ray geometry."""

import math

import numpy as np
import pytest

from strider.geometry import Pose2
from strider.sensors import (
    CAMERA_MOUNT_HEIGHT_M,
    CAMERA_MOUNT_PITCH_DEG,
    LIDAR_MOUNT_HEIGHT_M,
    DepthCameraSpec,
    LidarSpec,
    render_depth,
    render_lidar,
    sensor_pose,
    write_depth_pgm,
)
from strider.terrain import Block, Scenario, TerrainWorld

NOISELESS = DepthCameraSpec(noise_near=0.0, noise_far=0.0)
QUIET_LIDAR = LidarSpec(precision_near=0.0, precision_far=0.0)


def _world(blocks=()):
    scn = Scenario(name="t", blocks=tuple(blocks), floor_z=0.0, edits=(),
                   goal=Pose2(4.0, 0.0, 0.0), robot_start=Pose2(0.0, 0.0, 0.0))
    return TerrainWorld.from_scenario(scn)


def _step_block(bid=1, center=(1.6, 0.0, 0.1), extents=(0.4, 0.5, 0.1)):
    return Block(id=bid, center=np.array(center, dtype=float),
                 extents=np.array(extents, dtype=float))


def test_camera_pose_geometry():
    pose = sensor_pose(Pose2(1.0, 2.0, 0.0), "camera")
    assert np.allclose(pose.position, [1.0, 2.0, CAMERA_MOUNT_HEIGHT_M])
    R = pose.rotation
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    # optical axis (third column) tilts down by the mount pitch
    p = math.radians(CAMERA_MOUNT_PITCH_DEG)
    assert np.allclose(R[:, 2], [math.cos(p), 0.0, -math.sin(p)], atol=1e-12)
    with pytest.raises(ValueError, match="unknown sensor"):
        sensor_pose(Pose2(0, 0), "sonar")


def test_flat_floor_backprojects_to_plane():
    world = _world()
    img = render_depth(world, Pose2(0.0, 0.0, 0.0), NOISELESS, seed=1)
    pts = img.back_project()
    valid = img.valid_mask()
    assert valid.mean() > 0.9  # pitched down, nearly every ray lands
    z = pts[:, :, 2][valid]
    assert np.abs(z).max() < 1e-9


def test_ground_footprint_span():
    # pitch 45, vfov 55: rays hit ground between h/tan(72.5deg) and h/tan(17.5deg)
    world = _world()
    img = render_depth(world, Pose2(0.0, 0.0, 0.0), NOISELESS, seed=1)
    pts = img.back_project()
    x = pts[:, :, 0][img.valid_mask()]
    h = CAMERA_MOUNT_HEIGHT_M
    near = h / math.tan(math.radians(45.0 + 27.5))
    far = h / math.tan(math.radians(45.0 - 27.5))
    assert x.min() == pytest.approx(near, abs=0.02)
    assert x.max() == pytest.approx(far, abs=0.06)


def test_yawed_robot_looks_along_heading():
    world = _world()
    yaw = math.radians(90.0)
    img = render_depth(world, Pose2(0.0, 0.0, yaw), NOISELESS, seed=1)
    pts = img.back_project()
    valid = img.valid_mask()
    assert pts[:, :, 1][valid].min() > 0.25   # everything ahead is +y now
    assert abs(pts[:, :, 0][valid].mean()) < 0.05


def test_block_scene_surfaces_are_exact():
    block = _step_block()
    world = _world([block])
    img = render_depth(world, Pose2(0.0, 0.0, 0.0), NOISELESS, seed=3)
    pts = img.back_project().reshape(-1, 3)
    pts = pts[np.isfinite(pts[:, 0])]
    on_floor = np.abs(pts[:, 2]) < 1e-9
    on_top = np.abs(pts[:, 2] - 0.2) < 1e-9
    x_faces = np.min(np.abs(pts[:, 0:1] - np.array([[1.2, 2.0]])), axis=1) < 1e-9
    y_faces = np.min(np.abs(pts[:, 1:2] - np.array([[-0.5, 0.5]])), axis=1) < 1e-9
    on_side = (x_faces | y_faces) & (pts[:, 2] > -1e-9) & (pts[:, 2] < 0.2 + 1e-9)
    assert np.all(on_floor | on_top | on_side)
    assert on_top.sum() > 500          # the top face is actually imaged
    assert (on_side & ~on_floor & ~on_top).sum() > 50

    # the raised top occludes floor behind the leading edge
    shadowed = pts[(np.abs(pts[:, 1]) < 0.3) & on_floor, 0]
    gap_lo, gap_hi = 2.0, 2.35         # shadow band behind the block
    assert not np.any((shadowed > gap_lo + 0.02) & (shadowed < gap_hi - 0.02))


def test_seed_controls_noise():
    world = _world()
    spec = DepthCameraSpec()
    a = render_depth(world, Pose2(0, 0, 0), spec, seed=11)
    b = render_depth(world, Pose2(0, 0, 0), spec, seed=11)
    c = render_depth(world, Pose2(0, 0, 0), spec, seed=12)
    assert np.array_equal(a.depths, b.depths)
    assert not np.array_equal(a.depths, c.depths)

    # noise magnitude tracks the configured band
    clean = render_depth(world, Pose2(0, 0, 0), NOISELESS, seed=5)
    mask = a.valid_mask() & clean.valid_mask()
    err = (a.depths - clean.depths)[mask]
    sigma = spec.noise_stddev_at(clean.depths[mask])
    assert np.std(err / sigma) == pytest.approx(1.0, abs=0.05)


def test_noise_model_endpoints():
    spec = DepthCameraSpec()
    assert spec.noise_stddev_at(0.0) == spec.noise_near
    assert spec.noise_stddev_at(spec.max_range) == pytest.approx(spec.noise_far)
    assert spec.noise_stddev_at(spec.max_range * 10) == pytest.approx(spec.noise_far)
    lidar = LidarSpec()
    assert lidar.noise_stddev_at(0.0) == lidar.precision_near
    assert lidar.noise_stddev_at(lidar.max_range) == pytest.approx(lidar.precision_far)


def test_spec_validation():
    with pytest.raises(ValueError):
        DepthCameraSpec(width=0)
    with pytest.raises(ValueError):
        DepthCameraSpec(fov_h_deg=180.0)
    with pytest.raises(ValueError):
        DepthCameraSpec(max_range=0.0)
    with pytest.raises(ValueError):
        LidarSpec(channels=0)


def test_lidar_floor_ring():
    world = _world()
    cloud = render_lidar(world, Pose2(0.0, 0.0, 0.0), QUIET_LIDAR, seed=2)
    pts = cloud.points
    assert len(pts) > 10000
    assert np.abs(pts[:, 2]).max() < 1e-9  # all floor hits
    radius = np.hypot(pts[:, 0], pts[:, 1])
    # steepest channel looks down at fov_v/2 = 45 degrees
    r_min = LIDAR_MOUNT_HEIGHT_M / math.tan(math.radians(45.0))
    assert radius.min() == pytest.approx(r_min, abs=0.02)
    assert radius.max() <= QUIET_LIDAR.max_range + 1e-9


def test_lidar_sees_block_sides():
    block = _step_block(center=(3.0, 0.0, 0.25), extents=(0.5, 0.5, 0.25))
    world = _world([block])
    cloud = render_lidar(world, Pose2(0.0, 0.0, 0.0), QUIET_LIDAR, seed=2)
    pts = cloud.points
    face = pts[np.abs(pts[:, 0] - 2.5) < 1e-6]
    assert len(face) > 20                      # the facing wall shows up
    assert face[:, 2].min() > -1e-9 and face[:, 2].max() < 0.5 + 1e-9
    top = pts[(np.abs(pts[:, 2] - 0.5) < 1e-9)]
    assert len(top) > 5


def test_depth_pgm_dump(tmp_path):
    world = _world()
    img = render_depth(world, Pose2(0, 0, 0), NOISELESS, seed=1)
    path = tmp_path / "frame.pgm"
    write_depth_pgm(img, path)
    raw = path.read_bytes()
    header, rest = raw.split(b"\n", 1)
    assert header == b"P5"
    dims, rest = rest.split(b"\n", 1)
    assert dims == b"320 240"
    maxval, payload = rest.split(b"\n", 1)
    assert maxval == b"65535"
    assert len(payload) == 320 * 240 * 2
    gray = np.frombuffer(payload, dtype=">u2").reshape(240, 320)
    want = np.round(img.depths * 65535.0 / img.spec.max_range)
    assert np.array_equal(gray, want.astype(">u2"))

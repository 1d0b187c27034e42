"""Polygon and plane primitives checked against shapely and analytic cases."""

import math

import numpy as np
import pytest
from shapely.geometry import MultiPoint, Point, Polygon

from strider.geometry import (
    Pose2,
    clip_polygon_convex,
    convex_hull,
    dist_point_polygon_boundary,
    ensure_ccw,
    fit_plane,
    is_convex,
    plane_basis,
    point_in_polygon,
    polygon_area,
    polygon_centroid,
    polygon_min_distance,
    polygon_outline_distance,
    polygon_signed_area,
    polygons_overlap,
    rectangle_corners,
    rot2,
    rotz,
    signed_depth_in_polygon,
    wrap_angle,
)


def _rand_convex(rng, n=6, scale=1.0, shift=(0.0, 0.0)):
    pts = rng.normal(size=(n + 4, 2)) * scale + np.asarray(shift)
    hull = convex_hull(pts)
    assert len(hull) >= 3
    return hull


def test_wrap_angle_range_and_identity():
    for a in np.linspace(-20.0, 20.0, 400):
        w = wrap_angle(float(a))
        assert -math.pi < w <= math.pi
        # same direction on the unit circle
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-12)
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-12)
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)


def test_rotations_orthonormal():
    for yaw in (0.0, 0.4, -2.0, 3.1):
        r2 = rot2(yaw)
        assert np.allclose(r2 @ r2.T, np.eye(2), atol=1e-12)
        r3 = rotz(yaw)
        assert np.allclose(r3 @ r3.T, np.eye(3), atol=1e-12)
        assert np.allclose(r3[:2, :2], r2)


def test_pose2_transform_roundtrip():
    p = Pose2(1.0, -2.0, 0.7)
    local = np.array([0.3, -0.1])
    world = p.transform(local)
    back = rot2(-p.yaw) @ (world - p.xy)
    assert np.allclose(back, local)


def test_area_and_centroid_match_shapely():
    rng = np.random.default_rng(3)
    for _ in range(50):
        poly = _rand_convex(rng)
        sh = Polygon(poly)
        assert polygon_area(poly) == pytest.approx(sh.area, rel=1e-9)
        assert polygon_signed_area(poly) > 0.0  # convex_hull returns ccw
        c = polygon_centroid(poly)
        assert np.allclose(c, [sh.centroid.x, sh.centroid.y], atol=1e-9)


def test_ensure_ccw_flips_cw_input():
    sq = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]])  # cw
    assert polygon_signed_area(sq) < 0.0
    fixed = ensure_ccw(sq)
    assert polygon_signed_area(fixed) > 0.0
    assert polygon_area(fixed) == pytest.approx(1.0)


def test_rectangle_corners_analytic():
    poly = rectangle_corners(1.0, 2.0, math.pi / 2.0, 0.5, 0.2)
    assert polygon_area(poly) == pytest.approx(0.4)
    assert is_convex(poly)
    # rotated 90deg: the long axis now runs along y
    assert np.max(poly[:, 1]) == pytest.approx(2.5)
    assert np.min(poly[:, 1]) == pytest.approx(1.5)
    assert np.max(poly[:, 0]) == pytest.approx(1.2)


def test_clip_convex_matches_shapely_intersection():
    rng = np.random.default_rng(11)
    hits = 0
    for _ in range(120):
        a = _rand_convex(rng, scale=1.0)
        b = _rand_convex(rng, scale=1.0, shift=rng.uniform(-1.5, 1.5, size=2))
        out = clip_polygon_convex(a, b)
        want = Polygon(a).intersection(Polygon(b)).area
        got = polygon_area(out) if len(out) >= 3 else 0.0
        assert got == pytest.approx(want, abs=1e-9)
        hits += want > 1e-9
    assert hits > 20  # the sampling actually exercises overlapping pairs


def test_point_in_polygon_matches_shapely():
    rng = np.random.default_rng(5)
    for _ in range(30):
        poly = _rand_convex(rng)
        sh = Polygon(poly)
        for _ in range(20):
            pt = rng.uniform(-2.5, 2.5, size=2)
            if sh.boundary.distance(Point(pt)) < 1e-6:
                continue  # boundary convention differs, skip knife edges
            assert point_in_polygon(pt, poly) == sh.contains(Point(pt))


def test_overlap_and_distances_match_shapely():
    rng = np.random.default_rng(17)
    for _ in range(120):
        a = _rand_convex(rng, n=5)
        b = _rand_convex(rng, n=5, shift=rng.uniform(-2.0, 2.0, size=2))
        sa, sb = Polygon(a), Polygon(b)
        inter = sa.intersection(sb).area
        if 1e-12 < inter < 1e-7:
            continue  # grazing contact is orientation-epsilon territory
        assert polygons_overlap(a, b) == (inter > 1e-12)
        if inter == 0.0:
            assert polygon_min_distance(a, b) == pytest.approx(
                sa.distance(sb), abs=1e-9)
        assert polygon_outline_distance(a, b) == pytest.approx(
            sa.exterior.distance(sb.exterior), abs=1e-9)


def test_containment_counts_as_overlap():
    outer = rectangle_corners(0.0, 0.0, 0.0, 1.0, 1.0)
    inner = rectangle_corners(0.0, 0.0, 0.3, 0.2, 0.1)
    assert polygons_overlap(outer, inner)
    assert polygons_overlap(inner, outer)
    assert polygon_min_distance(inner, outer) == 0.0
    # outline distance is still positive for a strictly interior polygon
    assert polygon_outline_distance(inner, outer) > 0.5


def test_boundary_distance_and_signed_depth():
    sq = rectangle_corners(0.0, 0.0, 0.0, 1.0, 1.0)
    assert dist_point_polygon_boundary((0.0, 0.0), sq) == pytest.approx(1.0)
    assert dist_point_polygon_boundary((2.0, 0.0), sq) == pytest.approx(1.0)
    assert signed_depth_in_polygon((0.0, 0.0), sq) == pytest.approx(1.0)
    assert signed_depth_in_polygon((0.9, 0.0), sq) == pytest.approx(0.1)
    assert signed_depth_in_polygon((2.0, 0.0), sq) == pytest.approx(-1.0)


def test_convex_hull_matches_shapely():
    rng = np.random.default_rng(23)
    for _ in range(40):
        pts = rng.normal(size=(rng.integers(3, 40), 2))
        hull = convex_hull(pts)
        want = MultiPoint([tuple(p) for p in pts]).convex_hull
        if want.geom_type != "Polygon":
            continue  # collinear draw
        assert polygon_area(hull) == pytest.approx(want.area, rel=1e-9, abs=1e-12)
        assert is_convex(hull)


def test_plane_basis_right_handed():
    for n in ([0.0, 0.0, 1.0], [0.1, -0.2, 0.97], [1.0, 0.0, 0.0]):
        n = np.asarray(n) / np.linalg.norm(n)
        u, v = plane_basis(n)
        assert abs(np.dot(u, n)) < 1e-12
        assert abs(np.dot(v, n)) < 1e-12
        assert abs(np.dot(u, v)) < 1e-12
        assert np.allclose(np.cross(u, v), n, atol=1e-12)


def test_fit_plane_recovers_seeded_plane():
    rng = np.random.default_rng(31)
    for _ in range(20):
        normal = rng.normal(size=3)
        normal /= np.linalg.norm(normal)
        if normal[2] < 0:
            normal = -normal
        point = rng.uniform(-1, 1, size=3)
        u, v = plane_basis(normal)
        coords = rng.uniform(-1, 1, size=(200, 2))
        pts = point + coords @ np.stack([u, v])
        noise = rng.normal(scale=1e-3, size=(200, 1)) * normal
        centroid, n_est, rms = fit_plane(pts + noise)
        assert np.dot(n_est, normal) > math.cos(math.radians(0.5))
        assert abs(np.dot(centroid - point, normal)) < 1e-3
        assert rms < 2e-3

    # clean plane: rms collapses to ~0
    flat = np.column_stack([rng.uniform(-1, 1, (50, 2)), np.full(50, 0.25)])
    _, n_flat, rms_flat = fit_plane(flat)
    assert np.allclose(n_flat, [0, 0, 1], atol=1e-9)
    assert rms_flat < 1e-9

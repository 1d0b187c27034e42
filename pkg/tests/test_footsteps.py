"""Footstep snapping, transition checks, wiggle, and the step planner."""

import math

import pytest

from conftest import flat_region
from strider.footsteps import (
    Footstep,
    FootstepPlan,
    PlannerParams,
    REJECT_CLIFF,
    REJECT_COLLISION,
    REJECT_FOOTHOLD,
    REJECT_INCLINE,
    REJECT_REACH,
    REJECT_STEP_HEIGHT,
    StanceState,
    check_transition,
    format_rejection_summary,
    other_side,
    plan_footsteps,
    snap_to_regions,
    wiggle,
    write_plan_log,
)
from strider.geometry import Pose2, polygon_area
import numpy as np

P = PlannerParams()
SOLE_AREA = P.sole_length * P.sole_width


def _stance(x=0.0, y=0.0, z=0.0, yaw=0.0, width=0.25):
    half = width / 2.0
    c, s = math.cos(yaw), math.sin(yaw)
    return StanceState(
        left=Footstep("left", x - s * half, y + c * half, z, yaw),
        right=Footstep("right", x + s * half, y - c * half, z, yaw))


def _tilted_region(region_id, incline_deg, half=2.0):
    from strider.regions import PlanarRegion
    a = math.radians(incline_deg)
    n = np.array([math.sin(a), 0.0, math.cos(a)])
    basis = np.array([[math.cos(a), 0.0], [0.0, 1.0], [-math.sin(a), 0.0]])
    hull = np.array([[half, half], [-half, half], [-half, -half], [half, -half]])
    return PlanarRegion(region_id=region_id, plane_point=np.zeros(3),
                        plane_normal=n, basis=basis, concave_hull=hull,
                        convex_polygons=(hull.copy(),), patch_count=64,
                        area=4 * half * half, fit_rms=0.0)


# ---------------------------------------------------------------- snapping

def test_snap_full_support():
    regions = [flat_region(3, 0.0, 0.0, 0.15, 5.0, 5.0)]
    snap = snap_to_regions(0.4, -0.2, 0.3, regions)
    assert snap.ok and snap.region_id == 3
    assert snap.z == pytest.approx(0.15)
    assert snap.fraction == pytest.approx(1.0)
    assert polygon_area(snap.foothold_world) == pytest.approx(SOLE_AREA, rel=1e-6)


def test_snap_partial_support_fraction():
    # region covers x <= 0; a sole centered on the edge keeps half its area
    regions = [flat_region(1, -5.0, 0.0, 0.0, 5.0, 5.0)]
    snap = snap_to_regions(0.0, 0.0, 0.0, regions)
    assert snap.ok
    assert snap.fraction == pytest.approx(0.5, abs=1e-6)
    assert polygon_area(snap.foothold_world) == pytest.approx(SOLE_AREA / 2, rel=1e-6)


def test_snap_rejects_thin_support():
    regions = [flat_region(1, -5.0, 0.0, 0.0, 5.0, 5.0)]
    # 30% of the sole length overhangs the region edge
    snap = snap_to_regions(P.sole_length / 2.0 - 0.3 * P.sole_length, 0.0, 0.0,
                           regions)
    assert not snap.ok and snap.reason == REJECT_FOOTHOLD
    assert snap.fraction == pytest.approx(0.3, abs=1e-6)


def test_snap_nothing_below():
    regions = [flat_region(1, -5.0, 0.0, 0.0, 1.0, 1.0)]
    snap = snap_to_regions(3.0, 3.0, 0.0, regions)
    assert snap.reason == REJECT_FOOTHOLD and snap.fraction == 0.0


def test_snap_prefers_higher_surface():
    low = flat_region(1, 0.0, 0.0, 0.0, 5.0, 5.0)
    high = flat_region(2, 0.0, 0.0, 0.5, 5.0, 5.0)
    for regions in ([low, high], [high, low]):
        snap = snap_to_regions(0.0, 0.0, 0.0, regions)
        assert snap.region_id == 2 and snap.z == pytest.approx(0.5)


def test_snap_height_tie_keeps_first():
    a = flat_region(1, 0.0, 0.0, 0.0, 5.0, 5.0)
    b = flat_region(2, 0.0, 0.0, 0.02, 5.0, 5.0)  # within the height tie band
    assert snap_to_regions(0.0, 0.0, 0.0, [a, b]).region_id == 1
    assert snap_to_regions(0.0, 0.0, 0.0, [b, a]).region_id == 2


def test_snap_rejects_steep_surface():
    ok = snap_to_regions(0.0, 0.0, 0.0, [_tilted_region(1, 30.0)])
    assert ok.ok
    snap = snap_to_regions(0.0, 0.0, 0.0, [_tilted_region(1, 40.0)])
    assert snap.reason == REJECT_INCLINE


def test_snap_on_slope_height_follows_plane():
    region = _tilted_region(1, 20.0)
    s0 = snap_to_regions(0.0, 0.0, 0.0, [region])
    s1 = snap_to_regions(-0.5, 0.0, 0.0, [region])
    assert s0.z == pytest.approx(0.0, abs=1e-9)
    # plane z = -tan(incline) * x
    assert s1.z == pytest.approx(0.5 * math.tan(math.radians(20.0)), abs=1e-9)


# ------------------------------------------------------- transition checks

FLOOR = [flat_region(0, 0.0, 0.0, 0.0, 10.0, 10.0)]


def _sup(side="right", x=0.0, y=-0.125, z=0.0, yaw=0.0):
    return Footstep(side, x, y, z, yaw)


def test_transition_accepts_nominal_step():
    cand = Footstep("left", 0.25, 0.125, 0.0, 0.0)
    assert check_transition(_sup(), cand, FLOOR) is None


def test_transition_reach_box():
    too_far = Footstep("left", 0.40, 0.125, 0.0, 0.0)
    assert check_transition(_sup(), too_far, FLOOR) == REJECT_REACH
    behind = Footstep("left", -0.20, 0.125, 0.0, 0.0)
    assert check_transition(_sup(), behind, FLOOR) == REJECT_REACH
    crossed = Footstep("left", 0.20, -0.125, 0.0, 0.0)  # on the support line
    assert check_transition(_sup(), crossed, FLOOR) == REJECT_REACH
    splayed = Footstep("left", 0.20, 0.40, 0.0, 0.0)    # lat 0.525
    assert check_transition(_sup(), splayed, FLOOR) == REJECT_REACH


def test_transition_reach_box_is_signed_by_side():
    # mirrored placement: a right candidate must sit right of a left support
    sup = Footstep("left", 0.0, 0.125, 0.0, 0.0)
    ok = Footstep("right", 0.25, -0.125, 0.0, 0.0)
    bad = Footstep("right", 0.25, 0.375, 0.0, 0.0)
    assert check_transition(sup, ok, FLOOR) is None
    assert check_transition(sup, bad, FLOOR) == REJECT_REACH


def test_transition_step_height():
    up = Footstep("left", 0.25, 0.125, 0.35, 0.0)
    assert check_transition(_sup(), up, FLOOR) == REJECT_STEP_HEIGHT
    down = Footstep("left", 0.25, 0.125, -0.35, 0.0)
    assert check_transition(_sup(), down, FLOOR) == REJECT_STEP_HEIGHT
    edge = Footstep("left", 0.25, 0.125, 0.30, 0.0)
    assert check_transition(_sup(), edge, FLOOR) is None


def test_transition_yaw_limit():
    twisted = Footstep("left", 0.25, 0.125, 0.0, math.radians(23.0))
    assert check_transition(_sup(), twisted, FLOOR) == REJECT_REACH
    fine = Footstep("left", 0.25, 0.125, 0.0, math.radians(22.0))
    assert check_transition(_sup(), fine, FLOOR) is None


def test_transition_cliff_proximity():
    wall = flat_region(7, 0.0, 0.83, 0.5, 1.0, 0.5)  # ledge starting at y=0.33
    cand = Footstep("left", 0.0, 0.25, 0.0, 0.0)     # sole edge at y=0.315
    assert check_transition(_sup(), cand, FLOOR + [wall]) == REJECT_CLIFF
    assert check_transition(_sup(), cand, FLOOR) is None
    # same ledge but below the cliff height does not count
    ledge = flat_region(8, 0.0, 0.83, 0.25, 1.0, 0.5)
    assert check_transition(_sup(), cand, FLOOR + [ledge]) is None


def test_transition_sole_collision():
    sup = Footstep("right", 0.0, 0.0, 0.0, 0.0)
    cand = Footstep("left", 0.0, 0.15, 0.0, math.radians(22.0))
    assert check_transition(sup, cand, FLOOR) == REJECT_COLLISION


# ------------------------------------------------------------------ wiggle

def test_wiggle_pulls_off_the_edge():
    regions = [flat_region(1, -5.0, 0.0, 0.0, 5.0, 5.0)]   # edge at x=0
    step = Footstep("left", -0.10, 0.0, 0.0, 0.0)          # toes overhang
    out = wiggle(step, regions)
    assert out.x == pytest.approx(-0.15)
    assert out.y == pytest.approx(0.0)
    assert out.foothold_fraction == pytest.approx(1.0)
    assert out.region_id == 1
    assert out.side == "left"


def test_wiggle_identity_when_centered():
    regions = [flat_region(1, 0.0, 0.0, 0.0, 5.0, 5.0)]
    step = Footstep("left", 0.0, 0.0, 0.0, 0.0)
    assert wiggle(step, regions) is step


def test_wiggle_skips_synthetic_regions():
    regions = [flat_region(-3, -5.0, 0.0, 0.0, 5.0, 5.0)]
    step = Footstep("left", -0.10, 0.0, 0.0, 0.0)
    assert wiggle(step, regions) is step


def test_wiggle_respects_planned_neighbors():
    regions = [flat_region(1, -5.0, 0.0, 0.0, 5.0, 5.0)]
    step = Footstep("left", -0.10, 0.0, 0.0, 0.0)
    # neighbors at the reach limits: whatever move survives must keep both
    # transitions valid, unlike the unconstrained pull to (-0.15, 0)
    pred = Footstep("right", -0.45, -0.125, 0.0, 0.0)
    succ = Footstep("right", 0.25, -0.125, 0.0, 0.0)
    free = wiggle(step, regions)
    out = wiggle(step, regions, predecessor=pred, successor=succ)
    assert (out.x, out.y, out.yaw) != (free.x, free.y, free.yaw)
    assert check_transition(pred, out, regions) is None
    assert check_transition(out, succ, regions) is None
    # with slack on both sides the step takes the unconstrained pull
    pred_ok = Footstep("right", -0.30, -0.125, 0.0, 0.0)
    succ_ok = Footstep("right", 0.10, -0.125, 0.0, 0.0)
    out = wiggle(step, regions, predecessor=pred_ok, successor=succ_ok)
    assert out.x == pytest.approx(-0.15)
    assert check_transition(pred_ok, out, regions) is None
    assert check_transition(out, succ_ok, regions) is None


def test_wiggle_never_reduces_support():
    regions = [flat_region(1, -5.0, 0.0, 0.0, 5.0, 5.0)]
    step = Footstep("left", -0.08, 0.02, 0.0, 0.1)
    base = snap_to_regions(step.x, step.y, step.yaw, regions)
    out = wiggle(step, regions)
    after = snap_to_regions(out.x, out.y, out.yaw, regions)
    assert after.fraction >= base.fraction - 1e-9
    assert after.region_id == base.region_id


# ----------------------------------------------------------------- planner

BIG = [flat_region(1, 0.0, 0.0, 0.0, 10.0, 10.0)]


def _replay_transitions(plan: FootstepPlan, stance: StanceState, regions):
    feet = {"left": stance.left, "right": stance.right}
    for step in plan.steps:
        support = feet[other_side(step.side)]
        assert check_transition(support, step, regions) is None, \
            f"step {step} from {support}"
        feet[step.side] = step
    return feet


def test_plan_walks_to_subgoal():
    stance = _stance()
    goal = Pose2(1.0, 0.0, 0.0)
    plan = plan_footsteps(BIG, stance, goal)
    assert plan.full and plan.status == "full"
    assert len(plan.steps) >= 3
    sides = [s.side for s in plan.steps]
    assert all(a != b for a, b in zip(sides, sides[1:]))
    feet = _replay_transitions(plan, stance, BIG)
    mx = (feet["left"].x + feet["right"].x) / 2.0
    my = (feet["left"].y + feet["right"].y) / 2.0
    assert math.hypot(mx - goal.x, my - goal.y) <= P.goal_xy_tol + 1e-9
    assert plan.cost > 0.0
    assert plan.expanded <= max(50, int(P.timeout_s * 1600))
    assert all(s.foothold_fraction >= P.min_foothold_fraction for s in plan.steps)
    assert len(plan.inputs_digest) == 8


def test_plan_first_side_defaults_to_lagging_foot():
    # right foot trails the direction of travel, so it swings first
    stance = StanceState(left=Footstep("left", 0.10, 0.125, 0.0, 0.0),
                         right=Footstep("right", -0.10, -0.125, 0.0, 0.0))
    plan = plan_footsteps(BIG, stance, Pose2(1.0, 0.0, 0.0))
    assert plan.first_side == "right"
    assert plan.steps[0].side == "right"
    forced = plan_footsteps(BIG, stance, Pose2(1.0, 0.0, 0.0), first_side="left")
    assert forced.steps[0].side == "left"


def test_plan_takes_minimum_steps_even_in_place():
    stance = _stance()
    plan = plan_footsteps(BIG, stance, stance.mid_pose())
    assert plan.full and len(plan.steps) >= 3
    longer = plan_footsteps(BIG, stance, stance.mid_pose(), min_steps=5)
    assert longer.full and len(longer.steps) >= 5


def test_plan_fails_without_support():
    plan = plan_footsteps([], _stance(), Pose2(1.0, 0.0, 0.0))
    assert plan.failed and plan.steps == ()
    assert plan.rejections.get(REJECT_FOOTHOLD, 0) > 0


def test_plan_partial_on_short_ribbon():
    ribbon = [flat_region(1, 0.35, 0.0, 0.0, 0.55, 0.5)]  # ends at x=0.9
    plan = plan_footsteps(ribbon, _stance(), Pose2(3.0, 0.0, 0.0), timeout_s=0.2)
    assert plan.status == "partial"
    assert plan.steps
    assert all(s.x <= 0.9 + 1e-9 for s in plan.steps)
    last_mid_x = (plan.steps[-1].x + (plan.steps[-2].x if len(plan.steps) > 1
                                      else _stance().right.x)) / 2.0
    assert last_mid_x > 0.2  # it went as far as the ground allows


def test_plan_effort_budget_scales_with_timeout():
    ribbon = [flat_region(1, 0.35, 0.0, 0.0, 0.55, 0.5)]
    plan = plan_footsteps(ribbon, _stance(), Pose2(5.0, 0.0, 0.0), timeout_s=0.05)
    assert plan.expanded <= 80  # max(50, 0.05 * 1600)
    assert not plan.full


def test_plan_cancel_stops_immediately():
    plan = plan_footsteps(BIG, _stance(), Pose2(2.0, 0.0, 0.0),
                          cancel=lambda: True)
    assert not plan.full
    assert plan.expanded <= 2


def test_plan_is_deterministic():
    stance = _stance()
    goal = Pose2(1.2, 0.3, 0.4)
    a = plan_footsteps(BIG, stance, goal)
    b = plan_footsteps(BIG, stance, goal)
    assert [(s.side, s.x, s.y, s.z, s.yaw) for s in a.steps] == \
           [(s.side, s.x, s.y, s.z, s.yaw) for s in b.steps]
    assert a.cost == b.cost
    assert a.expanded == b.expanded
    assert a.inputs_digest == b.inputs_digest
    digest_other = plan_footsteps(BIG, stance, Pose2(1.2, 0.3, 0.5)).inputs_digest
    assert digest_other != a.inputs_digest


def test_plan_log_round_trip(tmp_path):
    stance = _stance()
    plan = plan_footsteps(BIG, stance, Pose2(0.8, 0.0, 0.0))
    path = tmp_path / "plan.log"
    write_plan_log(plan, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# footstep-plan-log v1"
    assert lines[1].startswith("# params: ") and "grid_xy=0.05" in lines[1]
    assert f"digest={plan.inputs_digest}" in lines[2]
    assert f"status=full steps={len(plan.steps)}" in lines[3]
    assert f"expanded={plan.expanded}" in lines[3]
    assert lines[4].startswith("# rejections: ")
    assert lines[5] == "# columns: id parent side x y z yaw status detail"
    rows = [ln.split(maxsplit=8) for ln in lines[6:]]
    assert len(rows) == len(plan.log_records)
    ok_rows = [r for r in rows if r[7] == "ok"]
    assert all(r[8].startswith("g=") for r in ok_rows)
    assert [int(r[0]) for r in rows] == list(range(len(rows)))
    rejected = [r for r in rows if r[7] == "rejected"]
    assert all(not r[8].startswith("g=") for r in rejected)
    # identical planner call -> byte-identical log, modulo the wall time line
    again = plan_footsteps(BIG, stance, Pose2(0.8, 0.0, 0.0))
    path2 = tmp_path / "plan2.log"
    write_plan_log(again, path2)
    strip = lambda text: "\n".join(ln for ln in text.splitlines()
                                   if not ln.startswith("# result"))
    assert strip(path.read_text()) == strip(path2.read_text())


def test_rejection_summary_format():
    text = format_rejection_summary({"foot collision": 2, "step too high": 9,
                                     "outside reach box": 2})
    assert text == "step too high: 9; foot collision: 2; outside reach box: 2"


def test_plan_message_shape():
    plan = plan_footsteps(BIG, _stance(), Pose2(0.8, 0.0, 0.0))
    msg = plan.to_message()
    assert msg["status"] == "full"
    assert len(msg["steps"]) == len(plan.steps)
    step = msg["steps"][0]
    assert set(step) >= {"side", "x", "y", "z", "yaw", "region_id",
                         "foothold_fraction", "square_up"}
    assert msg["subgoal"] == [0.8, 0.0, 0.0]

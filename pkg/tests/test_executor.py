"""Kinematic walk executor: cadence, queue surgery, square-up, falls."""

import math

import pytest

from strider.executor import WalkExecutor, WalkTiming
from strider.footsteps import Footstep


def _foot(side, x, y=None, z=0.0, yaw=0.0, square_up=False):
    if y is None:
        y = 0.125 if side == "left" else -0.125
    return Footstep(side=side, x=x, y=y, z=z, yaw=yaw, square_up=square_up)


def _standing(timing=None):
    timing = timing or WalkTiming()
    return WalkExecutor(timing, _foot("left", 0.0), _foot("right", 0.0))


def _march(n=3, start_x=0.25):
    steps = []
    side = "left"
    for i in range(n):
        steps.append(_foot(side, start_x + 0.25 * i))
        side = "right" if side == "left" else "left"
    return steps


def _run(ex, ticks):
    events = []
    for _ in range(ticks):
        events.extend(ex.tick())
    return events


def test_timing_tick_counts():
    t = WalkTiming()
    assert t.swing_ticks == 300
    assert t.transfer_ticks == 200
    assert t.step_duration == pytest.approx(2.0)
    with pytest.raises(ValueError):
        WalkTiming(dt=0.0)


def test_cadence_is_exact():
    ex = _standing()
    assert ex.submit(_march(4))
    events = _run(ex, 5000)
    by_kind = {}
    for e in events:
        by_kind.setdefault(e.kind, []).append(e)

    completed = by_kind["step_completed"]
    assert len(completed) == 4
    # completions land on exact multiples of the step duration
    for i, e in enumerate(completed):
        assert e.time_s == pytest.approx(2.0 * (i + 1), abs=1e-9)
    swings = by_kind["swing_started"]
    for s, c in zip(swings, completed):
        assert c.time_s - s.time_s == pytest.approx(1.2, abs=1e-9)
    halves = by_kind["swing_half"]
    assert len(halves) == 4
    for s, h in zip(swings, halves):
        assert h.time_s - s.time_s == pytest.approx(0.6, abs=1e-9)
    assert len(by_kind["queue_empty"]) == 1
    assert ex.steps_completed == 4
    assert not ex.walking()


def test_transfer_precedes_every_swing():
    ex = _standing()
    ex.submit(_march(2))
    events = _run(ex, 1200)
    order = [e.kind for e in events if e.kind in ("transfer_started", "swing_started")]
    assert order == ["transfer_started", "swing_started"] * 2


def test_submit_rejects_broken_alternation():
    ex = _standing()
    bad = [_foot("left", 0.25), _foot("left", 0.5)]
    assert not ex.submit(bad)
    assert ex.submit(_march(2))
    # replacement during the first transfer may keep or flip the side; after
    # the first completion it must alternate from the landed foot
    _run(ex, 600)  # first step landed, second is in transfer
    assert ex.steps_completed == 1
    assert ex.next_swing_side() == "right"
    assert not ex.submit([_foot("left", 0.6)])
    assert ex.submit([_foot("right", 0.6), _foot("left", 0.85)])


def test_replace_same_side_keeps_transfer_clock():
    ex = _standing()
    ex.submit([_foot("left", 0.25), _foot("right", 0.3)])
    _run(ex, 100)  # mid transfer of the first (left) step
    assert ex.phase == "transfer"
    target = _foot("left", 0.30)
    assert ex.submit([target, _foot("right", 0.55)])
    # the swing begins 100 ticks later, not 200: the shift was not restarted
    events = _run(ex, 100)
    assert any(e.kind == "swing_started" and e.step.x == pytest.approx(0.30)
               for e in events)


def test_replace_other_side_restarts_transfer():
    ex = _standing()
    ex.submit([_foot("left", 0.25), _foot("right", 0.3)])
    _run(ex, 100)
    # no completed steps yet, so a right-first replacement is legal and
    # restarts the weight shift
    assert ex.submit([_foot("right", 0.25), _foot("left", 0.5)])
    events = _run(ex, 150)
    assert not any(e.kind == "swing_started" for e in events)  # clock restarted
    events = _run(ex, 50)
    assert any(e.kind == "swing_started" and e.step.side == "right"
               for e in events)


def test_replace_during_swing_keeps_committed_step():
    ex = _standing()
    ex.submit(_march(3))
    _run(ex, 300)  # inside the first swing
    assert ex.phase == "swing"
    committed = ex.active_step
    assert committed.x == pytest.approx(0.25)
    # replacement must start with the other foot; the active step is kept
    assert not ex.submit([_foot("left", 0.9)])
    assert ex.submit([_foot("right", 0.7)])
    events = _run(ex, 200)
    done = [e for e in events if e.kind == "step_completed"]
    assert done and done[0].step.x == pytest.approx(0.25)
    assert ex.pending[0].x == pytest.approx(0.7) if ex.pending else \
        ex.active_step.x == pytest.approx(0.7)


def test_append_mode_extends_queue():
    ex = _standing()
    ex.submit(_march(2))
    assert ex.submit([_foot("left", 0.75)], replace=False)
    assert not ex.submit([_foot("left", 1.0)], replace=False)  # wrong side
    assert ex.submit([_foot("right", 1.0)], replace=False)
    events = _run(ex, 4200)
    assert sum(e.kind == "step_completed" for e in events) == 4


def test_square_up_closes_the_walk():
    ex = _standing()
    ex.submit(_march(3))  # ends on a left step at x=0.75
    ex.request_square_up(True, width=0.25)
    events = _run(ex, 5000)
    squared = [e for e in events if e.kind == "squared_up"]
    assert len(squared) == 1
    final = squared[0].step
    assert final.side == "right" and final.square_up
    assert final.x == pytest.approx(0.75)
    assert final.y == pytest.approx(ex.left.y - 0.25)
    assert final.yaw == ex.left.yaw
    assert not any(e.kind == "queue_empty" for e in events)
    # feet end parallel at stance width
    assert ex.left.x == pytest.approx(ex.right.x)
    assert ex.left.y - ex.right.y == pytest.approx(0.25)


def test_square_up_with_no_walk_is_immediate():
    ex = _standing()
    ex.request_square_up(True)
    events = _run(ex, 2)
    assert any(e.kind == "squared_up" and e.step is None for e in events)
    assert ex.phase == "standing"


def test_force_fall_drops_everything():
    ex = _standing()
    ex.submit(_march(3))
    _run(ex, 700)
    events = ex.force_fall()
    assert [e.kind for e in events] == ["disabled"]
    assert ex.fallen and not ex.walking()
    assert ex.pending == ()
    assert not ex.submit(_march(1, start_x=2.0))   # rejected while down
    assert _run(ex, 100) == []                      # time passes, nothing moves

    ex.stand_at(_foot("left", 2.0), _foot("right", 2.0))
    assert ex.phase == "standing"
    assert ex.submit([_foot("left", 2.25)])
    events = _run(ex, 600)
    assert any(e.kind == "step_completed" for e in events)


def test_mid_pose_tracks_walk():
    ex = _standing()
    assert ex.mid_pose().x == pytest.approx(0.0)
    assert ex.mid_z() == pytest.approx(0.0)
    ex.submit([_foot("left", 0.3, z=0.2), _foot("right", 0.3, z=0.2)])
    _run(ex, 200 + 150)  # halfway through the first swing
    assert ex.phase == "swing"
    mid = ex.mid_pose()
    # support foot at 0, swing foot halfway to 0.3
    assert mid.x == pytest.approx(0.075, abs=0.01)
    # mid height rises with the swing target, apex excluded
    assert ex.mid_z() == pytest.approx((0.0 + 0.1) / 2.0, abs=0.01)
    sw = ex.swing_foot_position()
    assert sw is not None
    x, y, z = sw
    assert x == pytest.approx(0.15, abs=0.01)
    # apex bump peaks at mid swing
    assert z == pytest.approx(0.2 * 0.5 + 0.10, abs=0.01)
    _run(ex, 5000)
    assert ex.mid_pose().x == pytest.approx(0.3)
    assert ex.mid_z() == pytest.approx(0.2)


def test_expected_swing_remaining():
    ex = _standing()
    assert ex.expected_swing_remaining() == pytest.approx(0.6)
    ex.submit(_march(2))
    _run(ex, 100)
    assert ex.expected_swing_remaining() == pytest.approx(1.2 + 0.4, abs=1e-9)
    _run(ex, 100 + 150)
    assert ex.phase == "swing"
    assert ex.expected_swing_remaining() == pytest.approx(0.6, abs=1e-9)


def test_next_swing_side_through_phases():
    ex = _standing()
    assert ex.next_swing_side() == "left"
    ex.submit([_foot("right", 0.25), _foot("left", 0.3)])
    _run(ex, 50)
    assert ex.next_swing_side() == "right"   # first transfer keeps its side
    _run(ex, 250)
    assert ex.phase == "swing"
    assert ex.next_swing_side() == "left"
    _run(ex, 300)
    assert ex.steps_completed == 1
    assert ex.next_swing_side() == "left"    # anchored on the landed right foot


def test_imminent_stance_previews_landing():
    ex = _standing()
    target = _foot("left", 0.4)
    ex.submit([target])
    _run(ex, 300)
    assert ex.phase == "swing"
    now = ex.stance()
    soon = ex.imminent_stance()
    assert now.left.x == pytest.approx(0.0)
    assert soon.left.x == pytest.approx(0.4)
    assert soon.right.x == now.right.x


def test_time_accounting():
    ex = _standing(WalkTiming(dt=0.01))
    _run(ex, 250)
    assert ex.time_s == pytest.approx(2.5)

"""Kinematics-only walking executor.

Steps run on a fixed cadence: a weight transfer, then a swing with a parabolic
apex, advancing on an integer tick clock so event times are exact and runs
reproducible. The executor owns the step queue and the replacement rule: a
swinging step is committed, but during transfer a replacement plan may swap
the not-yet-lifted step too (the transfer clock restarts if the new first
step swings the other foot). On request it finishes a run by bringing the
trailing foot alongside the leading one and reporting squared_up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .footsteps import LEFT, Footstep, StanceState, other_side
from .geometry import Pose2, wrap_angle

STANDING = "standing"
TRANSFER = "transfer"
SWING = "swing"
FALLEN = "fallen"

EV_TRANSFER_STARTED = "transfer_started"
EV_SWING_STARTED = "swing_started"
EV_SWING_HALF = "swing_half"
EV_STEP_COMPLETED = "step_completed"
EV_QUEUE_EMPTY = "queue_empty"
EV_SQUARED_UP = "squared_up"
EV_DISABLED = "disabled"


@dataclass(frozen=True)
class WalkTiming:
    swing_s: float = 1.2
    transfer_s: float = 0.8
    dt: float = 0.004
    swing_apex: float = 0.10

    def __post_init__(self):
        for name in ("swing_s", "transfer_s", "dt"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    @property
    def swing_ticks(self) -> int:
        return max(2, int(round(self.swing_s / self.dt)))

    @property
    def transfer_ticks(self) -> int:
        return max(1, int(round(self.transfer_s / self.dt)))

    @property
    def step_duration(self) -> float:
        return self.swing_s + self.transfer_s


@dataclass(frozen=True)
class ExecEvent:
    kind: str
    time_s: float
    step: Footstep | None = None
    step_index: int = -1

    def to_message(self) -> dict:
        msg = {"kind": self.kind, "t": round(self.time_s, 4),
               "step_index": self.step_index}
        if self.step is not None:
            msg["step"] = self.step.to_message()
        return msg


class WalkExecutor:
    def __init__(self, timing: WalkTiming, left: Footstep, right: Footstep):
        self.timing = timing
        self._feet = {"left": left, "right": right}
        self._pending: list[Footstep] = []
        self._active: Footstep | None = None
        self._active_index = -1
        self._swing_origin: Footstep | None = None
        self._phase = STANDING
        self._phase_tick = 0          # ticks elapsed inside the current phase
        self._tick = 0
        self._half_fired = False
        self._next_index = 0
        self._last_completed: Footstep | None = None
        self._square_up_requested = False
        self._square_up_width = 0.25

    # -- introspection ---------------------------------------------------------

    @property
    def time_s(self) -> float:
        return self._tick * self.timing.dt

    @property
    def phase(self) -> str:
        return self._phase

    @property
    def fallen(self) -> bool:
        return self._phase == FALLEN

    @property
    def active_step(self) -> Footstep | None:
        return self._active

    @property
    def pending(self) -> tuple[Footstep, ...]:
        return tuple(self._pending)

    @property
    def left(self) -> Footstep:
        return self._feet["left"]

    @property
    def right(self) -> Footstep:
        return self._feet["right"]

    @property
    def steps_completed(self) -> int:
        return self._next_index if self._active is None else self._active_index

    def walking(self) -> bool:
        return self._phase in (TRANSFER, SWING)

    def stance(self) -> StanceState:
        return StanceState(left=self.left, right=self.right)

    def imminent_stance(self) -> StanceState:
        """Feet after the committed step lands; the planning start for updates."""
        feet = dict(self._feet)
        if self._active is not None:
            feet[self._active.side] = self._active
        return StanceState(left=feet["left"], right=feet["right"])

    def next_swing_side(self) -> str:
        """Side a replacement plan must start with; mirrors the submit check."""
        if self._phase == SWING:
            return other_side(self._active.side)
        if self._last_completed is not None:
            return other_side(self._last_completed.side)
        if self._active is not None:
            # first step of the run, still in transfer; a replacement keeps its side
            return self._active.side
        return LEFT

    def expected_swing_remaining(self) -> float:
        """Time until the committed step lands; the natural planning budget."""
        if self._phase == SWING:
            return (self.timing.swing_ticks - self._phase_tick) * self.timing.dt
        if self._phase == TRANSFER:
            return self.timing.swing_s + \
                (self.timing.transfer_ticks - self._phase_tick) * self.timing.dt
        return self.timing.swing_s / 2.0

    def swing_foot_position(self) -> tuple[float, float, float] | None:
        """Interpolated swing foot point, None outside a swing."""
        if self._phase != SWING or self._active is None or self._swing_origin is None:
            return None
        p = self._phase_tick / self.timing.swing_ticks
        o, t = self._swing_origin, self._active
        x = o.x + (t.x - o.x) * p
        y = o.y + (t.y - o.y) * p
        z = o.z + (t.z - o.z) * p + 4.0 * self.timing.swing_apex * p * (1.0 - p)
        return (x, y, z)

    def mid_pose(self) -> Pose2:
        sup = self._feet[other_side(self._active.side)] if self._active else None
        if self._phase == SWING and sup is not None:
            sw = self.swing_foot_position()
            yaw_t = self._phase_tick / self.timing.swing_ticks
            o, t = self._swing_origin, self._active
            sw_yaw = o.yaw + wrap_angle(t.yaw - o.yaw) * yaw_t
            yaw = sup.yaw + 0.5 * wrap_angle(sw_yaw - sup.yaw)
            return Pose2((sup.x + sw[0]) / 2.0, (sup.y + sw[1]) / 2.0, wrap_angle(yaw))
        return self.stance().mid_pose()

    def mid_z(self) -> float:
        if self._phase == SWING and self._active is not None:
            sup = self._feet[other_side(self._active.side)]
            p = self._phase_tick / self.timing.swing_ticks
            o = self._swing_origin
            return (sup.z + o.z + (self._active.z - o.z) * p) / 2.0
        return self.stance().mid_z()

    # -- commands --------------------------------------------------------------

    def submit(self, steps, replace: bool = True) -> bool:
        """Queue steps; False when the batch is rejected (never raises).

        With replace, pending steps are swapped wholesale. A swinging step is
        committed and stays; a step still in transfer is replaced along with
        the queue, restarting the weight shift if the new first step swings
        the other foot. Sides must alternate, anchored on the swinging step or
        on the last completed step.
        """
        if self._phase == FALLEN:
            return False
        steps = list(steps)
        if not steps:
            return False
        for a, b in zip(steps, steps[1:]):
            if b.side != other_side(a.side):
                return False
        expect = self._expected_first_side(replace)
        if expect is not None and steps[0].side != expect:
            return False
        if not replace:
            self._pending.extend(steps)
            return True
        if self._phase == TRANSFER:
            # the active step has not lifted off yet; it is fair game
            previous_side = self._active.side
            self._active = steps[0]
            self._swing_origin = self._feet[self._active.side]
            self._pending = steps[1:]
            if self._active.side != previous_side:
                self._phase_tick = 0
        else:
            self._pending = steps
        return True

    def _expected_first_side(self, replace: bool) -> str | None:
        if not replace:
            if self._pending:
                return other_side(self._pending[-1].side)
            if self._active is not None:
                return other_side(self._active.side)
            if self._last_completed is not None:
                return other_side(self._last_completed.side)
            return None
        if self._phase == SWING:
            return other_side(self._active.side)
        # transfer or standing: alternation is anchored on the landed foot
        if self._last_completed is not None:
            return other_side(self._last_completed.side)
        return None

    def clear_pending(self) -> None:
        self._pending.clear()

    def request_square_up(self, enabled: bool = True, width: float | None = None) -> None:
        """Arm (or disarm) the finishing move once the queue drains."""
        self._square_up_requested = enabled
        if width is not None:
            self._square_up_width = width

    @property
    def square_up_requested(self) -> bool:
        return self._square_up_requested

    def force_fall(self) -> list[ExecEvent]:
        self._phase = FALLEN
        self._active = None
        self._active_index = -1
        self._swing_origin = None
        self._pending.clear()
        self._square_up_requested = False
        return [ExecEvent(EV_DISABLED, self.time_s)]

    def stand_at(self, left: Footstep, right: Footstep) -> None:
        """Reset to a standing stance (startup, or recovery after a fall)."""
        self._feet = {"left": left, "right": right}
        self._pending.clear()
        self._active = None
        self._active_index = -1
        self._swing_origin = None
        self._phase = STANDING
        self._phase_tick = 0
        self._half_fired = False
        self._next_index = 0
        self._last_completed = None
        self._square_up_requested = False

    # -- time ------------------------------------------------------------------

    def _square_up_step(self) -> Footstep | None:
        lead = self._last_completed
        if lead is None:
            return None
        side = other_side(lead.side)
        sign = 1.0 if side == LEFT else -1.0
        c, s = math.cos(lead.yaw), math.sin(lead.yaw)
        w = self._square_up_width
        return Footstep(side=side, x=lead.x - s * sign * w, y=lead.y + c * sign * w,
                        z=lead.z, yaw=lead.yaw, region_id=lead.region_id,
                        square_up=True)

    def _activate(self, step: Footstep, now: float, events: list[ExecEvent]) -> None:
        self._active = step
        self._active_index = self._next_index
        self._next_index += 1
        self._swing_origin = self._feet[step.side]
        self._phase = TRANSFER
        self._phase_tick = 0
        self._half_fired = False
        events.append(ExecEvent(EV_TRANSFER_STARTED, now, step, self._active_index))

    def _start_next(self, now: float, events: list[ExecEvent]) -> bool:
        if self._pending:
            self._activate(self._pending.pop(0), now, events)
            return True
        if self._square_up_requested:
            self._square_up_requested = False
            step = self._square_up_step()
            if step is None:
                # nothing was walked; the stance already is the finish pose
                events.append(ExecEvent(EV_SQUARED_UP, now, None, -1))
                return False
            self._activate(step, now, events)
            return True
        return False

    def tick(self) -> list[ExecEvent]:
        """Advance one dt; returns events that fired on this tick."""
        self._tick += 1
        now = self.time_s
        events: list[ExecEvent] = []
        if self._phase == FALLEN:
            return events

        if self._phase == STANDING:
            if not self._start_next(now, events):
                return events

        self._phase_tick += 1

        if self._phase == TRANSFER:
            if self._phase_tick >= self.timing.transfer_ticks:
                self._phase = SWING
                self._phase_tick = 0
                events.append(ExecEvent(EV_SWING_STARTED, now, self._active,
                                        self._active_index))
            return events

        # swing
        if not self._half_fired and self._phase_tick >= self.timing.swing_ticks // 2:
            self._half_fired = True
            events.append(ExecEvent(EV_SWING_HALF, now, self._active,
                                    self._active_index))
        if self._phase_tick >= self.timing.swing_ticks:
            landed = self._active
            index = self._active_index
            self._feet[landed.side] = landed
            self._active = None
            self._swing_origin = None
            self._last_completed = landed
            events.append(ExecEvent(EV_STEP_COMPLETED, now, landed, index))
            if landed.square_up and not self._pending:
                self._phase = STANDING
                self._phase_tick = 0
                events.append(ExecEvent(EV_SQUARED_UP, now, landed, index))
            elif not self._start_next(now, events):
                self._phase = STANDING
                self._phase_tick = 0
                events.append(ExecEvent(EV_QUEUE_EMPTY, now, None, index))
        return events

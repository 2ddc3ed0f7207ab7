"""Online scheduling: re-plan remaining needs at every arrival slot.

At each arrival the operator (1) updates, per departure slot, the energy still
to charge and (2) stacks one water-filling per departure group, earliest
departure first, each on top of the groups already placed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import (
    BaselineProfile,
    ClassDemand,
    InfeasibleScenarioError,
    QuadraticCost,
    Schedule,
    TimeGrid,
    WfChargeError,
    cost,
)
from .waterfill import water_fill

REMAINING_RTOL = 1e-9


class EventOrderError(WfChargeError, ValueError):
    pass


@dataclass(frozen=True)
class ArrivalEvent:
    arrival: int
    new_demands: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        demands = {}
        for d, kwh in self.new_demands.items():
            d, kwh = int(d), float(kwh)
            if d < self.arrival:
                raise ValueError(f"departure {d} before arrival {self.arrival}")
            if not kwh >= 0 or not math.isfinite(kwh):
                raise ValueError(f"arrival {self.arrival}, departure {d}: bad energy {kwh}")
            demands[d] = demands.get(d, 0.0) + kwh
        object.__setattr__(self, "new_demands", dict(sorted(demands.items())))

    def to_json(self) -> str:
        return json.dumps({"a": self.arrival,
                           "demands": {str(d): kwh for d, kwh in self.new_demands.items()}})

    @classmethod
    def from_json(cls, line: str) -> "ArrivalEvent":
        obj = json.loads(line)
        return cls(int(obj["a"]), {int(d): float(v) for d, v in obj["demands"].items()})


def events_from_demand(demand: ClassDemand) -> list[ArrivalEvent]:
    """One event per arrival slot, classes sharing an arrival merged."""
    return [ArrivalEvent(a, deps) for a, deps in demand.by_arrival().items()]


def read_events(lines: Iterable[str]) -> list[ArrivalEvent]:
    return [ArrivalEvent.from_json(line) for line in lines if line.strip()]


def write_events(events: Iterable[ArrivalEvent]) -> str:
    return "".join(ev.to_json() + "\n" for ev in events)


@dataclass(frozen=True)
class OnlineState:
    """What the operator knows between two arrivals.

    ``programmed`` maps each departure slot to the full-horizon profile planned
    at ``last_arrival`` (zero before it).  ``realized`` is the aggregate EV power
    already executed; only slots before ``last_arrival`` are nonzero.
    """

    grid: TimeGrid
    baseline: BaselineProfile
    last_arrival: int | None = None
    remaining: Mapping[int, float] = field(default_factory=dict)
    programmed: Mapping[int, np.ndarray] = field(default_factory=dict)
    realized: np.ndarray | None = None

    def __post_init__(self):
        self.baseline.check_grid(self.grid)
        realized = np.zeros(self.grid.num_slots) if self.realized is None else np.array(self.realized, float)
        realized.setflags(write=False)
        object.__setattr__(self, "realized", realized)
        object.__setattr__(self, "remaining", dict(sorted(self.remaining.items())))

    @classmethod
    def initial(cls, grid: TimeGrid, baseline: BaselineProfile) -> "OnlineState":
        return cls(grid, baseline)

    @property
    def departures(self) -> list[int]:
        return list(self.remaining)

    def with_remaining(self, d: int, kwh: float) -> "OnlineState":
        """Copy with one remaining need overridden (used for price perturbations)."""
        remaining = dict(self.remaining)
        if kwh > 0:
            remaining[d] = kwh
        else:
            remaining.pop(d, None)
        return replace(self, remaining=remaining)

    def program(self, schedule: Schedule) -> "OnlineState":
        return replace(self, programmed={d: schedule.profiles[d] for d in schedule.keys()})


def advance_and_update(state: OnlineState, event: ArrivalEvent) -> OnlineState:
    """Execute the plan up to the new arrival and refresh the remaining needs."""
    grid = state.grid
    a = grid.check_slot(event.arrival)
    prev = state.last_arrival
    if prev is not None and a <= prev:
        raise EventOrderError(f"arrival {a} does not follow previous arrival {prev}")
    for d in event.new_demands:
        grid.check_slot(d)

    realized = state.realized.copy()
    remaining: dict[int, float] = {}
    start = prev if prev is not None else a
    for d, left in state.remaining.items():
        profile = state.programmed.get(d)
        if profile is None:
            raise InfeasibleScenarioError(f"departure {d} has remaining need but no programmed profile")
        executed = profile[start - 1:a - 1]
        realized[start - 1:a - 1] += executed
        left_now = left - grid.slot_hours * math.fsum(executed)
        if abs(left_now) <= REMAINING_RTOL * max(1.0, left):
            left_now = 0.0
        if d < a:
            if left_now > 0:
                raise InfeasibleScenarioError(
                    f"{left_now:.6g} kWh still owed to departure {d} at arrival {a}")
            continue
        remaining[d] = left_now
    for d, kwh in event.new_demands.items():
        remaining[d] = remaining.get(d, 0.0) + kwh
    remaining = {d: kwh for d, kwh in remaining.items() if kwh > 0}
    return OnlineState(grid, state.baseline, a, remaining, {}, realized)


def schedule_arrival(state: OnlineState, f: QuadraticCost) -> tuple[Schedule, float]:
    """Stacked water-filling over departure groups, earliest departure first.

    Returns the group schedule (keys are departure slots, windows ``[a..d]``)
    and the operator cost over the whole horizon, where slots before the
    arrival use the power already executed.
    """
    if state.last_arrival is None:
        raise WfChargeError("no arrival has been processed yet")
    a = state.last_arrival
    grid = state.grid
    T = grid.num_slots
    fictitious = state.baseline.power.copy()
    windows: dict[int, tuple[int, int]] = {}
    profiles: dict[int, np.ndarray] = {}
    for d in sorted(state.remaining):
        result = water_fill(state.remaining[d], fictitious[a - 1:d], grid.slot_hours)
        profile = np.zeros(T)
        profile[a - 1:d] = result.charge
        fictitious[a - 1:d] += result.charge
        windows[d] = (a, d)
        profiles[d] = profile
    schedule = Schedule(grid, windows, profiles)
    load = fictitious + state.realized
    return schedule, cost(load, f)


@dataclass(frozen=True)
class OnlineTrace:
    grid: TimeGrid
    baseline: BaselineProfile
    events: tuple[ArrivalEvent, ...]
    states: tuple[OnlineState, ...]
    group_schedules: tuple[Schedule, ...]
    event_costs: tuple[float, ...]
    realized: np.ndarray
    total_load: np.ndarray
    cost: float

    def realized_by_group(self) -> dict[int, np.ndarray]:
        """Executed power per departure group: each event's plan holds until the next arrival."""
        T = self.grid.num_slots
        out: dict[int, np.ndarray] = {}
        bounds = [ev.arrival for ev in self.events] + [T + 1]
        for i, schedule in enumerate(self.group_schedules):
            lo, hi = bounds[i], bounds[i + 1]
            for d, profile in schedule.profiles.items():
                out.setdefault(d, np.zeros(T))[lo - 1:hi - 1] += profile[lo - 1:hi - 1]
        return dict(sorted(out.items()))

    def event_at(self, a: int) -> int:
        for i, ev in enumerate(self.events):
            if ev.arrival == a:
                return i
        raise KeyError(a)


def run_online(events: Sequence[ArrivalEvent], baseline: BaselineProfile, grid: TimeGrid,
               f: QuadraticCost) -> OnlineTrace:
    baseline.check_grid(grid)
    state = OnlineState.initial(grid, baseline)
    states, schedules, costs = [], [], []
    for ev in events:
        try:
            state = advance_and_update(state, ev)
        except WfChargeError as exc:
            raise type(exc)(f"event at slot {ev.arrival}: {exc}") from exc
        states.append(state)
        schedule, g = schedule_arrival(state, f)
        state = state.program(schedule)
        schedules.append(schedule)
        costs.append(g)

    realized = state.realized.copy()
    if state.last_arrival is not None:
        a = state.last_arrival
        for profile in state.programmed.values():
            realized[a - 1:] += profile[a - 1:]
    load = baseline.power + realized
    demanded = math.fsum(kwh for ev in events for kwh in ev.new_demands.values())
    delivered = grid.slot_hours * math.fsum(realized)
    assert abs(delivered - demanded) <= 1e-8 * max(1.0, demanded), (delivered, demanded)
    realized.setflags(write=False)
    load.setflags(write=False)
    return OnlineTrace(grid, baseline, tuple(events), tuple(states), tuple(schedules),
                       tuple(costs), realized, load, cost(load, f))


def run_online_demand(demand: ClassDemand, baseline: BaselineProfile, grid: TimeGrid,
                      f: QuadraticCost) -> OnlineTrace:
    demand.validate(grid)
    return run_online(events_from_demand(demand), baseline, grid, f)

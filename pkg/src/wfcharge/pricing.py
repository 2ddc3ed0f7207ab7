"""Charging unit prices: marginal operator cost per kWh of each class's need."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .model import (
    BaselineProfile,
    ClassDemand,
    EVClassKey,
    QuadraticCost,
    Schedule,
    SolverError,
    TimeGrid,
    WfChargeError,
)
from .offline import OfflineOptions, OfflineSolution, solve_offline
from .online import ArrivalEvent, OnlineState, OnlineTrace, schedule_arrival

OFFLINE = "offline"
ONLINE = "online"


class PricingError(WfChargeError):
    pass


@dataclass(frozen=True)
class PriceTable:
    entries: Mapping[EVClassKey, float]
    regime: str
    normalization: float | None = None
    variance_pct: float | None = None

    def __post_init__(self):
        if self.regime not in (OFFLINE, ONLINE):
            raise ValueError(f"unknown regime {self.regime!r}")
        entries = {EVClassKey(*k): float(v) for k, v in sorted(self.entries.items())}
        if not all(math.isfinite(v) for v in entries.values()):
            raise ValueError("non-finite price")
        object.__setattr__(self, "entries", entries)

    def __getitem__(self, key) -> float:
        return self.entries[EVClassKey(*key)]

    def __len__(self) -> int:
        return len(self.entries)

    def max(self) -> float:
        return max(self.entries.values(), default=0.0)

    def normalized(self, scale: float | None = None) -> "PriceTable":
        """Divide every entry by ``scale`` (default: this table's largest entry)."""
        scale = self.max() if scale is None else scale
        if scale <= 0:
            raise ValueError("normalization scale must be positive")
        return replace(self, entries={k: v / scale for k, v in self.entries.items()},
                       normalization=scale)

    def rows(self) -> list[tuple]:
        pct = "" if self.variance_pct is None else _fmt(self.variance_pct)
        return [(a, d, _fmt(lam), self.regime, pct) for (a, d), lam in self.entries.items()]


def _fmt(x: float) -> str:
    return repr(float(x))


PRICE_COLUMNS = ("a", "d", "lambda", "regime", "variance_pct")


def price_csv(tables: Iterable[PriceTable]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(PRICE_COLUMNS)
    for table in tables:
        writer.writerows(table.rows())
    return buf.getvalue()


def normalize_tables(tables: Sequence[PriceTable]) -> list[PriceTable]:
    """Scale a whole sweep by its single largest entry so the top price reads 1."""
    scale = max(t.max() for t in tables)
    return [t.normalized(scale) for t in tables]


def default_step(kwh: float) -> float:
    return max(1e-3, 1e-4 * kwh)


def _difference(value: Callable[[float], float], energy: float, h: float) -> float:
    if energy < h:
        return (value(energy + h) - value(energy)) / h
    return (value(energy + h) - value(energy - h)) / (2 * h)


def offline_cup(demand: ClassDemand, baseline: BaselineProfile, grid: TimeGrid, f: QuadraticCost,
                h: float | None = None, options: OfflineOptions | None = None,
                base: OfflineSolution | None = None) -> PriceTable:
    """Derivative of the optimal full-information cost with respect to each class need.

    Each perturbed instance is re-solved, warm-started from the base solution.
    """
    options = options or OfflineOptions()
    if base is None:
        base = solve_offline(demand, baseline, grid, f, options)
    warm = replace(options, warm_start=dict(base.schedule.profiles))
    prices = {}
    for key, kwh in demand.entries.items():
        step = default_step(kwh) if h is None else h

        def value(x, key=key):
            if x == kwh:
                return base.optimal_cost
            return solve_offline(demand.replace(key, x), baseline, grid, f, warm).optimal_cost

        try:
            prices[key] = _difference(value, kwh, step)
        except SolverError as exc:
            raise PricingError(f"class {tuple(key)}: {exc}") from exc
    return PriceTable(prices, OFFLINE)


def online_cup(state: OnlineState, event: ArrivalEvent, f: QuadraticCost,
               h: float | None = None) -> PriceTable:
    """Prices issued at ``event.arrival`` for the classes arriving then.

    ``state`` is the operator state right after the arrival update.  Only the
    need of the priced class moves; every other remaining need stays fixed.
    """
    if state.last_arrival != event.arrival:
        raise PricingError(f"state is at slot {state.last_arrival}, event at {event.arrival}")
    _, base_cost = schedule_arrival(state, f)
    prices = {}
    for d, kwh in event.new_demands.items():
        step = default_step(kwh) if h is None else h
        left = state.remaining.get(d, 0.0)

        def value(x, d=d, left=left, kwh=kwh):
            if x == kwh:
                return base_cost
            return schedule_arrival(state.with_remaining(d, left - kwh + x), f)[1]

        try:
            prices[EVClassKey(event.arrival, d)] = _difference(value, kwh, step)
        except WfChargeError as exc:
            raise PricingError(f"class ({event.arrival}, {d}): {exc}") from exc
    return PriceTable(prices, ONLINE)


def online_prices(trace: OnlineTrace, f: QuadraticCost, h: float | None = None) -> PriceTable:
    """All prices issued along an online run, each computed at its class's arrival."""
    entries = {}
    for state, event in zip(trace.states, trace.events):
        entries.update(online_cup(state, event, f, h).entries)
    return PriceTable(entries, ONLINE)


@dataclass(frozen=True)
class AnalyticCheck:
    residual: float
    skipped: bool = False
    slot: int | None = None


def analytic_check(price: float, schedule: Schedule, key, load: np.ndarray, f: QuadraticCost,
                   delta_hours: float, charge_tol: float = 1e-9) -> AnalyticCheck:
    """Compare a finite-difference price with f'(load) / delta at a slot where ``key`` charges.

    ``load`` is the total load of the solution that produced ``schedule``.
    """
    profile = schedule.profiles[key]
    if not np.any(profile > charge_tol * max(1.0, float(profile.max(initial=0.0)))):
        return AnalyticCheck(math.nan, skipped=True)
    t = int(np.argmax(profile))
    marginal = float(f.derivative(load[t])) / delta_hours
    residual = abs(price - marginal) / max(abs(marginal), 1e-12)
    return AnalyticCheck(residual, False, t + 1)

"""Online-versus-offline comparison and the variance sweep."""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import DimensionError, WfChargeError
from .offline import OfflineSolution, solve_offline
from .online import OnlineTrace, run_online_demand
from .pricing import PriceTable, offline_cup, online_prices
from .scenario import Scenario, discretize_distributions


@dataclass(frozen=True)
class OverloadStats:
    overload_slots: int
    avg_overload_kw: float
    cost_gap_pct: float = 0.0


def overload(online_total, offline_total, eps_kw: float = 1e-6) -> OverloadStats:
    """Slots where the online total load exceeds the offline one by more than ``eps_kw``."""
    online_total = np.asarray(online_total, float)
    offline_total = np.asarray(offline_total, float)
    if online_total.shape != offline_total.shape:
        raise DimensionError(f"load lengths differ: {online_total.shape} vs {offline_total.shape}")
    excess = online_total - offline_total
    over = excess > eps_kw
    n = int(over.sum())
    return OverloadStats(n, float(excess[over].mean()) if n else 0.0)


def cost_gap_pct(online_cost: float, offline_cost: float) -> float:
    if not offline_cost > 0:
        raise ValueError(f"relative gap needs a positive offline cost, got {offline_cost}")
    return 100.0 * (online_cost - offline_cost) / offline_cost


@dataclass(frozen=True)
class Comparison:
    """One scenario run under both regimes."""

    scenario: Scenario
    trace: OnlineTrace
    offline: OfflineSolution
    stats: OverloadStats
    online_seconds: float
    offline_seconds: float

    @property
    def offline_total(self) -> np.ndarray:
        return self.scenario.baseline.power + self.offline.schedule.aggregate()


def compare(scenario: Scenario) -> Comparison:
    s = scenario
    t0 = time.perf_counter()
    trace = run_online_demand(s.demand, s.baseline, s.grid, s.cost)
    t1 = time.perf_counter()
    off = solve_offline(s.demand, s.baseline, s.grid, s.cost)
    t2 = time.perf_counter()
    offline_total = s.baseline.power + off.schedule.aggregate()
    base = overload(trace.total_load, offline_total)
    stats = OverloadStats(base.overload_slots, base.avg_overload_kw,
                          cost_gap_pct(trace.cost, off.optimal_cost))
    return Comparison(s, trace, off, stats, t1 - t0, t2 - t1)


@dataclass(frozen=True)
class SweepPoint:
    variance_pct: float
    stats: OverloadStats
    online_cost: float
    offline_cost: float
    online_prices: PriceTable
    offline_prices: PriceTable
    arrival_support: tuple[int, ...]
    departure_support: tuple[int, ...]


def sweep_point(scenario: Scenario, pct: float, fd_step_kwh: float | None = None) -> SweepPoint:
    try:
        s = scenario.at_variance(pct)
        cmp = compare(s)
        on = online_prices(cmp.trace, s.cost, fd_step_kwh)
        off = offline_cup(s.demand, s.baseline, s.grid, s.cost, fd_step_kwh, base=cmp.offline)
    except WfChargeError as exc:
        raise type(exc)(f"sweep point {pct}%: {exc}") from exc
    arr, dep = discretize_distributions(s.commute, s.grid)
    return SweepPoint(
        float(pct), cmp.stats, cmp.trace.cost, cmp.offline.optimal_cost,
        PriceTable(on.entries, on.regime, variance_pct=float(pct)),
        PriceTable(off.entries, off.regime, variance_pct=float(pct)),
        tuple(int(t) + 1 for t in np.flatnonzero(arr)),
        tuple(int(t) + 1 for t in np.flatnonzero(dep)))


def sweep_range(start: float, stop: float, step: float) -> list[float]:
    if not 0 < start <= stop <= 300:
        raise ValueError("sweep range must lie within (0, 300]")
    if step <= 0:
        raise ValueError("sweep step must be positive")
    n = (stop - start) / step
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"step {step} does not divide the range {start}..{stop}")
    return [start + i * step for i in range(int(round(n)) + 1)]


def variance_sweep(scenario: Scenario, start: float = 100, stop: float = 300, step: float = 25,
                   fd_step_kwh: float | None = None, jobs: int = 1) -> list[SweepPoint]:
    """Run both regimes and both price schemes at every spread scale; ordered by scale."""
    scales = sweep_range(start, stop, step)
    if jobs <= 1 or len(scales) == 1:
        return [sweep_point(scenario, pct, fd_step_kwh) for pct in scales]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(sweep_point, scenario, pct, fd_step_kwh) for pct in scales]
        return [fut.result() for fut in futures]


SWEEP_COLUMNS = ("variance_pct", "overload_slots", "avg_overload_kw", "cost_gap_pct")


def sweep_csv(points) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(SWEEP_COLUMNS)
    for p in points:
        writer.writerow((repr(p.variance_pct), p.stats.overload_slots,
                         repr(p.stats.avg_overload_kw), repr(p.stats.cost_gap_pct)))
    return buf.getvalue()

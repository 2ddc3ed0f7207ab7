"""Full-information benchmark: schedule every class knowing all arrivals in advance.

The main solver is cyclic block-coordinate descent in which each block (one
EV class) is minimized exactly by water-filling against the baseline plus
every other class.  Projected gradient and an exhaustive grid search are kept
as independent checks.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

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
    cost,
)
from .waterfill import water_fill


@dataclass(frozen=True)
class OfflineOptions:
    tol: float = 1e-9
    change_tol_kw: float = 1e-10
    max_iters: int = 200_000
    seed: int | None = None  # shuffles the sweep order when set
    reverse: bool = False
    warm_start: Mapping[EVClassKey, np.ndarray] | None = None


@dataclass(frozen=True)
class OfflineSolution:
    schedule: Schedule
    optimal_cost: float
    iterations: int
    kkt_residual: float
    multipliers: Mapping[EVClassKey, float] = field(default_factory=dict)
    history: tuple[float, ...] = ()


def kkt_check(schedule: Schedule, baseline: BaselineProfile, f: QuadraticCost,
              energies: Mapping | None = None, charge_tol: float = 1e-9) -> tuple[float, dict]:
    """Optimality residual of a schedule and the per-key multipliers.

    For each key the multiplier is the lowest marginal cost f'(load) inside its
    window.  At an optimum every slot where the key charges sits at that value
    and no slot of the window is cheaper.  The residual is the largest gap on
    charging slots, scaled by max(1, max |f'|), combined with the relative
    energy-conservation error when ``energies`` is given.
    """
    load = baseline.power + schedule.aggregate()
    marginal = f.derivative(load)
    scale = max(1.0, float(np.max(np.abs(marginal))))
    residual = 0.0
    multipliers = {}
    for key, profile in schedule.profiles.items():
        a, d = schedule.windows[key]
        window = marginal[a - 1:d]
        mu = float(window.min())
        multipliers[key] = mu
        p = profile[a - 1:d]
        thr = charge_tol * max(1.0, float(p.max(initial=0.0)))
        charging = p > thr
        if np.any(charging):
            residual = max(residual, float((window[charging] - mu).max()) / scale)
        residual = max(residual, float(-p.min(initial=0.0)) / max(1.0, float(p.max(initial=0.0))))
        if energies is not None:
            want = float(energies[key])
            residual = max(residual, abs(schedule.energy(key) - want) / max(1.0, want))
    return residual, multipliers


def _uniform_start(demand: ClassDemand, grid: TimeGrid) -> dict[EVClassKey, np.ndarray]:
    out = {}
    for key, kwh in demand.entries.items():
        a, d = key
        p = np.zeros(grid.num_slots)
        p[a - 1:d] = kwh / grid.slot_hours / (d - a + 1)
        out[key] = p
    return out


def solve_offline(demand: ClassDemand, baseline: BaselineProfile, grid: TimeGrid,
                  f: QuadraticCost, options: OfflineOptions | None = None) -> OfflineSolution:
    """Minimize the total cost over all classes by cyclic exact block minimization."""
    options = options or OfflineOptions()
    demand.validate(grid)
    baseline.check_grid(grid)
    keys = list(demand.keys())
    if options.seed is not None:
        rng = np.random.default_rng(options.seed)
        keys = [keys[i] for i in rng.permutation(len(keys))]
    if options.reverse:
        keys.reverse()
    delta = grid.slot_hours

    profiles = _uniform_start(demand, grid)
    if options.warm_start:
        for key, p in options.warm_start.items():
            key = EVClassKey(*key)
            if key in profiles:
                p = np.asarray(p, float)
                energy = delta * p.sum()
                if energy > 0:
                    profiles[key] = p * (demand[key] / energy)
    load = baseline.power + sum(profiles.values(), np.zeros(grid.num_slots))
    history = [cost(load, f)]
    active = [k for k in keys if demand[k] > 0]

    iterations = 0
    converged = False
    for iterations in range(1, options.max_iters + 1):
        biggest = 0.0
        for key in active:
            a, d = key
            p = profiles[key]
            load[a - 1:d] -= p[a - 1:d]
            new = water_fill(demand[key], load[a - 1:d], delta).charge
            biggest = max(biggest, float(np.max(np.abs(new - p[a - 1:d]))))
            p[a - 1:d] = new
            load[a - 1:d] += new
        load = baseline.power + sum(profiles.values(), np.zeros(grid.num_slots))
        history.append(cost(load, f))
        if biggest < options.change_tol_kw:
            converged = True
            break

    schedule = Schedule(grid, {k: k.window for k in demand.keys()}, profiles)
    residual, multipliers = kkt_check(schedule, baseline, f, demand.entries)
    if not converged:
        raise SolverError(
            f"block-coordinate descent did not converge in {options.max_iters} sweeps",
            best=schedule, residual=residual)
    return OfflineSolution(schedule, history[-1], iterations, residual, multipliers, tuple(history))


def _project_rows_to_simplex(v: np.ndarray, mask: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto {x >= 0, sum(x) = radius, x = 0 off mask}."""
    big = np.where(mask, v, -np.inf)
    u = -np.sort(-big, axis=1)
    finite = np.isfinite(u)
    u_f = np.where(finite, u, 0.0)
    css = np.cumsum(u_f, axis=1) - radius[:, None]
    idx = np.arange(1, v.shape[1] + 1)
    cond = finite & (u_f - css / idx > 0)
    rho = cond.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(v.shape[0]), rho] / (rho + 1)
    out = np.maximum(v - theta[:, None], 0.0)
    out[~mask] = 0.0
    out[radius <= 0] = 0.0
    return out


def projected_gradient(windows: Sequence[tuple[int, int]], energies: Sequence[float],
                       baseline: BaselineProfile, grid: TimeGrid, f: QuadraticCost,
                       max_iter: int = 50_000, rtol: float = 1e-15) -> tuple[np.ndarray, float]:
    """Accelerated projected gradient with restart on the per-class variables.

    Returns ``(profiles, cost)`` with ``profiles`` shaped (n_classes, T).  Works
    on any windows, nested or not, so it serves as oracle for both the online
    and the offline schedulers.
    """
    if f.quad <= 0:
        raise ValueError("projected-gradient oracle needs a strictly convex cost")
    K, T = len(windows), grid.num_slots
    mask = np.zeros((K, T), dtype=bool)
    for i, (a, d) in enumerate(windows):
        mask[i, a - 1:d] = True
    radius = np.asarray(energies, float) / grid.slot_hours
    if K == 0:
        return np.zeros((0, T)), cost(baseline.power, f)
    x = np.where(mask, radius[:, None] / mask.sum(axis=1, keepdims=True), 0.0)
    lipschitz = 2.0 * f.quad * max(1, int(mask.sum(axis=0).max()))
    step = 1.0 / lipschitz

    def objective(z):
        return cost(baseline.power + z.sum(axis=0), f)

    y, t_k = x.copy(), 1.0
    best = objective(x)
    stall = 0
    for _ in range(max_iter):
        grad = np.where(mask, f.derivative(baseline.power + y.sum(axis=0))[None, :], 0.0)
        x_new = _project_rows_to_simplex(y - step * grad, mask, radius)
        val = objective(x_new)
        if val > best:
            # adaptive restart keeps the sequence monotone
            y, t_k = x.copy(), 1.0
            stall += 1
            if stall > 50:
                break
            continue
        t_next = 0.5 * (1 + math.sqrt(1 + 4 * t_k * t_k))
        y = x_new + ((t_k - 1) / t_next) * (x_new - x)
        improvement = best - val
        x, t_k = x_new, t_next
        best = val
        if improvement <= rtol * max(1.0, abs(val)):
            stall += 1
            if stall > 50:
                break
        else:
            stall = 0
    return x, best


def solve_projected_gradient(demand: ClassDemand, baseline: BaselineProfile, grid: TimeGrid,
                             f: QuadraticCost, max_iter: int = 50_000) -> OfflineSolution:
    keys = list(demand.keys())
    x, value = projected_gradient([k.window for k in keys], [demand[k] for k in keys],
                                  baseline, grid, f, max_iter=max_iter)
    schedule = Schedule(grid, {k: k.window for k in keys}, {k: x[i] for i, k in enumerate(keys)})
    residual, multipliers = kkt_check(schedule, baseline, f, demand.entries)
    return OfflineSolution(schedule, value, max_iter, residual, multipliers)


MAX_BRUTE_VARIABLES = 8
MAX_BRUTE_STEPS = 50
_BLOCK = 200_000


def _compositions(n: int, parts: int) -> np.ndarray:
    """All vectors of ``parts`` nonnegative integers summing to ``n``."""
    rows = []
    for bars in itertools.combinations(range(n + parts - 1), parts - 1):
        prev, row = -1, []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(n + parts - 1 - prev - 1)
        rows.append(row)
    return np.array(rows, dtype=float)


def brute_force_oracle(demand: ClassDemand, baseline: BaselineProfile, grid: TimeGrid,
                       f: QuadraticCost, steps_per_slot: int = 25) -> float:
    """Best cost over schedules whose per-slot shares are multiples of 1/steps_per_slot.

    Every class energy is cut into ``steps_per_slot`` equal quanta and every
    distribution of the quanta over the class window is enumerated.  The value
    is an upper bound on the true optimum.
    """
    demand.validate(grid)
    baseline.check_grid(grid)
    keys = [k for k in demand.keys() if demand[k] > 0]
    n_vars = sum(d - a + 1 for a, d in keys)
    if n_vars > MAX_BRUTE_VARIABLES:
        raise WfChargeError(f"brute force limited to {MAX_BRUTE_VARIABLES} variables, got {n_vars}")
    if not 1 <= steps_per_slot <= MAX_BRUTE_STEPS:
        raise WfChargeError(f"steps_per_slot must be in 1..{MAX_BRUTE_STEPS}")
    T = grid.num_slots
    if not keys:
        return cost(baseline.power, f)

    # per class: matrix of candidate full-horizon profiles
    options = []
    for key in keys:
        a, d = key
        comp = _compositions(steps_per_slot, d - a + 1)
        block = np.zeros((comp.shape[0], T))
        block[:, a - 1:d] = comp * (demand[key] / grid.slot_hours / steps_per_slot)
        options.append(block)
    n_total = math.prod(o.shape[0] for o in options)
    if n_total > 50_000_000:
        raise WfChargeError(f"brute force would enumerate {n_total} schedules")

    # vectorize over a trailing group of classes, loop over the rest
    split = len(options)
    size = 1
    while split > 0 and size * options[split - 1].shape[0] <= _BLOCK:
        split -= 1
        size *= options[split].shape[0]
    if split == len(options):
        split -= 1
    tail = np.zeros((1, T))
    for block in options[split:]:
        tail = (tail[:, None, :] + block[None, :, :]).reshape(-1, T)
    tail = tail + baseline.power

    best = math.inf
    for combo in itertools.product(*(range(o.shape[0]) for o in options[:split])):
        head = np.zeros(T)
        for block, i in zip(options[:split], combo):
            head += block[i]
        values = f(tail + head).sum(axis=1)
        best = min(best, float(values.min()))
    return best

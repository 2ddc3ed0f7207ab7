"""Closed-form water-filling of one charging window."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WaterFillResult:
    """``used_slots`` holds 0-based positions inside the window."""

    charge: np.ndarray
    level: float
    used_slots: frozenset[int]

    @property
    def power(self) -> float:
        return float(self.charge.sum())


def _level_sorted(target: float, b: np.ndarray) -> tuple[float, int]:
    if target == 0.0:
        return float(b[0]), 0
    prefix = np.cumsum(b)
    # breakpoints[k-1]: power needed to lift the k lowest slots to b_k
    breakpoints = np.arange(1, b.size + 1) * b - prefix
    n_used = int(np.searchsorted(breakpoints, target, side="left"))
    return float((target + prefix[n_used - 1]) / n_used), n_used


def water_level(energy: float, baseline, delta_hours: float = 1.0) -> tuple[float, int]:
    """Return ``(level, n_used)`` for spreading ``energy`` kWh on top of ``baseline``.

    With the baseline sorted increasingly (b_1 <= ... <= b_n) and a power target
    E = energy / delta_hours, the k lowest slots are raised to the common level
    (E + b_1 + ... + b_k) / k, where k is the largest index whose breakpoint
    k * b_k - (b_1 + ... + b_k) lies strictly below E.
    """
    b = np.sort(np.asarray(baseline, dtype=float), kind="stable")
    if b.size == 0:
        raise ValueError("empty charging window")
    if energy < 0:
        raise ValueError(f"energy must be >= 0, got {energy}")
    return _level_sorted(energy / delta_hours, b)


def water_fill(energy: float, window_baseline, delta_hours: float = 1.0) -> WaterFillResult:
    """Spread ``energy`` kWh over a window so the total load is as flat as possible.

    The baseline may be in any order.  Slots whose baseline lies below the
    returned level are raised exactly to it; the others receive nothing.  The
    result minimizes sum(f(baseline + charge)) for every increasing convex f.
    """
    baseline = np.asarray(window_baseline, dtype=float)
    if baseline.ndim != 1 or baseline.size == 0:
        raise ValueError("empty charging window")
    if energy < 0:
        raise ValueError(f"energy must be >= 0, got {energy}")
    if not np.all(np.isfinite(baseline)):
        raise ValueError("window baseline contains non-finite values")
    order = np.argsort(baseline, kind="stable")
    level, n_used = _level_sorted(energy / delta_hours, baseline[order])
    charge = np.zeros_like(baseline)
    if n_used:
        used_idx = order[:n_used]
        charge[used_idx] = np.maximum(level - baseline[used_idx], 0.0)
        used = frozenset(int(i) for i in used_idx if charge[i] > 0.0)
    else:
        used = frozenset()
    charge.setflags(write=False)
    return WaterFillResult(charge, level, used)


def water_fill_bisection(energy: float, window_baseline, delta_hours: float = 1.0,
                         tol: float = 1e-13, max_iter: int = 500) -> WaterFillResult:
    """Reference water-filling by bisection on the level.

    Slow and approximate; kept as an independent check of :func:`water_fill`.
    """
    b = np.asarray(window_baseline, dtype=float)
    if b.size == 0:
        raise ValueError("empty charging window")
    if energy < 0:
        raise ValueError(f"energy must be >= 0, got {energy}")
    target = energy / delta_hours
    lo = float(b.min())
    hi = float(b.max()) + target
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if np.maximum(mid - b, 0.0).sum() < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(hi)):
            break
    level = 0.5 * (lo + hi)
    charge = np.maximum(level - b, 0.0)
    used = frozenset(int(i) for i in np.flatnonzero(charge > 0))
    return WaterFillResult(charge, level, used)

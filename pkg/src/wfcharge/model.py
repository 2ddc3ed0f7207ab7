"""Domain types shared by the schedulers.

Units are fixed throughout the package: energy in kWh, power in kW and slot
durations in hours.  Slot indices are 1-based (``1 <= t <= num_slots``) in
every public structure; numpy arrays are 0-based, so slot ``t`` lives at
index ``t - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

ENERGY_RTOL = 1e-9


class WfChargeError(Exception):
    """Base class for every error raised by the package."""


class DimensionError(WfChargeError, ValueError):
    pass


class InfeasibleScenarioError(WfChargeError):
    """Demand that cannot be served, e.g. unmet energy past its departure."""


class SolverError(WfChargeError):
    """An iterative solver stopped before reaching its tolerance.

    ``best`` holds the best iterate found and ``residual`` its stopping metric.
    """

    def __init__(self, message: str, best=None, residual: float = math.nan):
        super().__init__(message)
        self.best = best
        self.residual = residual


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    num_slots: int
    slot_hours: float = 1.0
    slot_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if int(self.num_slots) != self.num_slots or self.num_slots < 1:
            raise ValueError(f"num_slots must be a positive integer, got {self.num_slots!r}")
        if not self.slot_hours > 0 or not math.isfinite(self.slot_hours):
            raise ValueError(f"slot_hours must be positive, got {self.slot_hours!r}")
        if self.slot_labels is not None:
            labels = tuple(str(s) for s in self.slot_labels)
            if len(labels) != self.num_slots:
                raise DimensionError(
                    f"{len(labels)} slot labels for {self.num_slots} slots")
            object.__setattr__(self, "slot_labels", labels)

    @classmethod
    def hourly(cls, num_slots: int = 24, start_hour: float = 0.0, slot_hours: float = 1.0) -> "TimeGrid":
        """Grid whose labels are wall-clock slot start times (``"08:00"``)."""
        labels = tuple(
            format_clock(start_hour + i * slot_hours) for i in range(num_slots))
        return cls(num_slots, slot_hours, labels)

    @property
    def slots(self) -> range:
        return range(1, self.num_slots + 1)

    def check_slot(self, t: int) -> int:
        if not 1 <= t <= self.num_slots:
            raise ValueError(f"slot {t} outside 1..{self.num_slots}")
        return t

    def label(self, t: int) -> str:
        self.check_slot(t)
        if self.slot_labels is None:
            return str(t)
        return self.slot_labels[t - 1]


def format_clock(hours: float) -> str:
    minutes = int(round(hours * 60))
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


def parse_clock(text: str | float) -> float:
    """``"08:30"`` -> 8.5 hours.  Plain numbers are taken as hours."""
    if isinstance(text, (int, float)):
        return float(text)
    hh, _, mm = str(text).partition(":")
    return int(hh) + (int(mm) if mm else 0) / 60.0


class EVClassKey(NamedTuple):
    arrival: int
    departure: int

    def validate(self, grid: TimeGrid) -> "EVClassKey":
        if not 1 <= self.arrival <= self.departure <= grid.num_slots:
            raise ValueError(
                f"invalid class (a={self.arrival}, d={self.departure}) for T={grid.num_slots}")
        return self

    @property
    def window(self) -> tuple[int, int]:
        return (self.arrival, self.departure)


@dataclass(frozen=True)
class ClassDemand:
    """Aggregated energy need (kWh) per EV class."""

    entries: Mapping[EVClassKey, float]

    def __post_init__(self):
        clean = {}
        for key, kwh in self.entries.items():
            key = EVClassKey(*key)
            kwh = float(kwh)
            if not kwh >= 0 or not math.isfinite(kwh):
                raise ValueError(f"class {tuple(key)}: energy must be finite and >= 0, got {kwh}")
            if key.arrival > key.departure:
                raise ValueError(f"class {tuple(key)} departs before it arrives")
            clean[key] = clean.get(key, 0.0) + kwh
        object.__setattr__(self, "entries", dict(sorted(clean.items())))

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[int, int, float]]) -> "ClassDemand":
        entries: dict[EVClassKey, float] = {}
        for a, d, kwh in triples:
            key = EVClassKey(int(a), int(d))
            entries[key] = entries.get(key, 0.0) + float(kwh)
        return cls(entries)

    def validate(self, grid: TimeGrid) -> "ClassDemand":
        for key in self.entries:
            key.validate(grid)
        return self

    @property
    def total(self) -> float:
        return math.fsum(self.entries.values())

    def keys(self):
        return self.entries.keys()

    def __getitem__(self, key) -> float:
        return self.entries[EVClassKey(*key)]

    def __len__(self) -> int:
        return len(self.entries)

    def replace(self, key, kwh: float) -> "ClassDemand":
        entries = dict(self.entries)
        entries[EVClassKey(*key)] = kwh
        return ClassDemand(entries)

    def by_arrival(self) -> dict[int, dict[int, float]]:
        out: dict[int, dict[int, float]] = {}
        for (a, d), kwh in self.entries.items():
            out.setdefault(a, {})[d] = kwh
        return dict(sorted(out.items()))


@dataclass(frozen=True)
class BaselineProfile:
    """Nonflexible power per slot (kW).  Negative values mean net local generation."""

    power: np.ndarray

    def __post_init__(self):
        power = _frozen(self.power)
        if power.ndim != 1 or power.size == 0:
            raise DimensionError("baseline must be a nonempty 1-D vector")
        if not np.all(np.isfinite(power)):
            raise ValueError("baseline contains non-finite values")
        object.__setattr__(self, "power", power)

    def __len__(self) -> int:
        return self.power.size

    def check_grid(self, grid: TimeGrid) -> "BaselineProfile":
        if self.power.size != grid.num_slots:
            raise DimensionError(
                f"baseline has {self.power.size} slots, grid has {grid.num_slots}")
        return self

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.power)


@dataclass(frozen=True)
class QuadraticCost:
    """Per-slot operator cost ``f(x) = quad * x**2 + lin * x + const`` of total load x (kW)."""

    quad: float = 0.5
    lin: float = 0.0
    const: float = 0.0
    valid_range: tuple[float, float] = (0.0, math.inf)

    def __post_init__(self):
        if not self.quad >= 0:
            raise ValueError("quad must be >= 0 for a convex cost")
        lo, hi = self.valid_range
        if lo > hi:
            raise ValueError("valid_range is reversed")
        slope = self.derivative(lo) if math.isfinite(lo) else -math.inf * self.quad
        if slope < -1e-12 * max(1.0, abs(self.lin)):
            raise ValueError(
                f"cost is decreasing at the lower end of its valid range ({lo}); "
                "increase the linear coefficient")

    @classmethod
    def increasing_from(cls, min_load: float, quad: float = 0.5, const: float = 0.0) -> "QuadraticCost":
        """Default experiment cost: linear term chosen so f' >= 0 for loads >= ``min_load``."""
        lin = 2.0 * quad * abs(min_load)
        return cls(quad, lin, const, (float(min_load), math.inf))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (self.quad * x + self.lin) * x + self.const

    def derivative(self, x):
        return 2.0 * self.quad * np.asarray(x, dtype=float) + self.lin


GroupKey = Hashable


@dataclass(frozen=True)
class Schedule:
    """Charging power per key (EV class or departure group).

    Each profile is stored as a full-horizon vector (length T) that is zero
    outside the key's window ``[a..d]``.
    """

    grid: TimeGrid
    windows: Mapping[GroupKey, tuple[int, int]]
    profiles: Mapping[GroupKey, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        T = self.grid.num_slots
        profiles = {}
        for key, (a, d) in self.windows.items():
            if not 1 <= a <= d <= T:
                raise ValueError(f"window {(a, d)} of {key!r} outside grid")
            p = np.asarray(self.profiles.get(key, np.zeros(T)), dtype=float)
            if p.shape != (T,):
                raise DimensionError(f"profile of {key!r} has shape {p.shape}, expected ({T},)")
            profiles[key] = _frozen(p)
        extra = set(self.profiles) - set(self.windows)
        if extra:
            raise ValueError(f"profiles without windows: {sorted(map(repr, extra))}")
        object.__setattr__(self, "windows", dict(self.windows))
        object.__setattr__(self, "profiles", profiles)

    @classmethod
    def empty(cls, grid: TimeGrid) -> "Schedule":
        return cls(grid, {}, {})

    def __len__(self) -> int:
        return len(self.profiles)

    def keys(self):
        return self.profiles.keys()

    def window_profile(self, key) -> np.ndarray:
        a, d = self.windows[key]
        return self.profiles[key][a - 1:d]

    def energy(self, key) -> float:
        return self.grid.slot_hours * math.fsum(self.profiles[key])

    def aggregate(self) -> np.ndarray:
        total = np.zeros(self.grid.num_slots)
        for p in self.profiles.values():
            total += p
        return total

    def merge(self, other: "Schedule") -> "Schedule":
        if other.grid.num_slots != self.grid.num_slots:
            raise DimensionError("schedules live on different grids")
        overlap = set(self.windows) & set(other.windows)
        if overlap:
            raise ValueError(f"duplicate keys in merge: {sorted(map(repr, overlap))}")
        return Schedule(self.grid, {**self.windows, **other.windows},
                        {**self.profiles, **other.profiles})

    def check(self, energies: Mapping[GroupKey, float] | None = None, rtol: float = ENERGY_RTOL) -> None:
        """Raise ``AssertionError`` if nonnegativity, window support or conservation fail."""
        for key, p in self.profiles.items():
            a, d = self.windows[key]
            scale = max(1.0, float(np.max(np.abs(p), initial=0.0)))
            if np.any(p < -rtol * scale):
                raise AssertionError(f"{key!r}: negative charging power {p.min()}")
            outside = np.concatenate([p[:a - 1], p[d:]])
            if np.any(outside != 0.0):
                raise AssertionError(f"{key!r}: charging outside window {(a, d)}")
            if energies is not None:
                want = float(energies[key])
                got = self.energy(key)
                if abs(got - want) > rtol * max(1.0, abs(want)):
                    raise AssertionError(f"{key!r}: energy {got} kWh, expected {want} kWh")


def total_load(schedule: Schedule, baseline: BaselineProfile) -> np.ndarray:
    """Baseline plus every scheduled profile, per slot."""
    if len(baseline) != schedule.grid.num_slots:
        raise DimensionError(
            f"schedule grid has {schedule.grid.num_slots} slots, baseline has {len(baseline)}")
    return baseline.power + schedule.aggregate()


def cost(load: Sequence[float] | np.ndarray, f: QuadraticCost) -> float:
    load = np.asarray(load, dtype=float)
    if not np.all(np.isfinite(load)):
        raise ValueError("load contains non-finite values")
    return math.fsum(f(load))

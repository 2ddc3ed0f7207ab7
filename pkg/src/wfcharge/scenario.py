"""Scenario construction: commuter demand, PV baseline and config files."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy.special import ndtr

from .model import (
    BaselineProfile,
    ClassDemand,
    EVClassKey,
    QuadraticCost,
    TimeGrid,
    WfChargeError,
    parse_clock,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

MIN_CLASS_KWH = 1e-9


class ConfigError(WfChargeError, ValueError):
    pass


class PVDataError(WfChargeError, ValueError):
    pass


class PVRowCountError(PVDataError):
    pass


class PVNegativeError(PVDataError):
    pass


class PVParseError(PVDataError):
    pass


@dataclass(frozen=True)
class CommuteConfig:
    """Commuter population whose arrival and departure times are normal.

    ``arrival_spread_min`` / ``departure_spread_min`` are standard deviations in
    minutes unless ``spread_is_variance`` is set, in which case they are read as
    variances in squared minutes.  ``variance_pct`` widens both distributions:
    the deviation is multiplied by ``variance_pct / 100`` (``spread_scaling =
    "linear"``) or by its square root (``"sqrt"``).  Slots holding less than
    ``min_slot_prob`` of a distribution are dropped before renormalizing.
    """

    n_evs: float = 100.0
    per_ev_kwh: float = 6.0
    arrival_mean: str | float = "08:00"
    departure_mean: str | float = "18:00"
    arrival_spread_min: float = 22.0
    departure_spread_min: float = 45.0
    variance_pct: float = 100.0
    spread_is_variance: bool = False
    spread_scaling: str = "linear"
    min_slot_prob: float = 0.04
    renormalize_after_drop: bool = True

    def __post_init__(self):
        if self.arrival_spread_min <= 0 or self.departure_spread_min <= 0:
            raise ConfigError("spreads must be positive")
        if not self.variance_pct > 0:
            raise ConfigError("variance_pct must be positive")
        if self.spread_scaling not in ("linear", "sqrt"):
            raise ConfigError(f"unknown spread_scaling {self.spread_scaling!r}")
        if not 0 <= self.min_slot_prob < 1:
            raise ConfigError("min_slot_prob must lie in [0, 1)")
        if self.n_evs < 0 or self.per_ev_kwh < 0:
            raise ConfigError("n_evs and per_ev_kwh must be >= 0")

    def sigma_hours(self, spread_min: float) -> float:
        sigma = math.sqrt(spread_min) if self.spread_is_variance else spread_min
        k = self.variance_pct / 100.0
        if self.spread_is_variance or self.spread_scaling == "sqrt":
            sigma *= math.sqrt(k)
        else:
            sigma *= k
        return sigma / 60.0

    def at_variance(self, pct: float) -> "CommuteConfig":
        return replace(self, variance_pct=float(pct))


def grid_start_hour(grid: TimeGrid) -> float:
    if grid.slot_labels is None:
        return 0.0
    return parse_clock(grid.slot_labels[0])


def _rounded_pmf(points: np.ndarray, half_width: float, mean: float, sigma: float,
                 floor: float) -> np.ndarray:
    # mass of the normal that rounds to each point, truncated to the grid
    pmf = ndtr((points + half_width - mean) / sigma) - ndtr((points - half_width - mean) / sigma)
    pmf[pmf < floor] = 0.0
    total = pmf.sum()
    if total <= 0:
        raise ConfigError(f"distribution around {mean:.2f} h has no mass on the grid")
    return pmf / total


def discretize_distributions(config: CommuteConfig, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Probability of arriving at the start / leaving at the end of each slot.

    A continuous time is assigned to the nearest slot boundary.  Element
    ``t - 1`` of the departure pmf is the share of EVs leaving when slot t ends.
    """
    start = grid_start_hour(grid)
    delta = grid.slot_hours
    starts = start + delta * np.arange(grid.num_slots)
    ends = starts + delta
    arr_mean = parse_clock(config.arrival_mean)
    dep_mean = parse_clock(config.departure_mean)
    if not starts[0] <= arr_mean <= ends[-1] or not starts[0] <= dep_mean <= ends[-1]:
        raise ConfigError("distribution means fall outside the grid span")
    sig_a = config.sigma_hours(config.arrival_spread_min)
    sig_d = config.sigma_hours(config.departure_spread_min)
    if not (sig_a > 1e-12 and sig_d > 1e-12):
        raise ConfigError("degenerate spread after scaling")
    arrival = _rounded_pmf(starts, delta / 2, arr_mean, sig_a, config.min_slot_prob)
    departure = _rounded_pmf(ends, delta / 2, dep_mean, sig_d, config.min_slot_prob)
    return arrival, departure


def build_demand(config: CommuteConfig, pmfs: tuple[np.ndarray, np.ndarray],
                 grid: TimeGrid) -> ClassDemand:
    """Aggregate need per class: N * P(arrive at a) * P(leave after d) * per-EV energy."""
    arrival, departure = (np.asarray(p, float) for p in pmfs)
    if arrival.size != grid.num_slots or departure.size != grid.num_slots:
        raise ConfigError("pmf length does not match the grid")
    counts = config.n_evs * np.outer(arrival, departure)
    counts = np.triu(counts)  # drop classes leaving before they arrive
    kept = counts.sum()
    if kept <= 0:
        raise ConfigError("no class with arrival <= departure")
    if config.renormalize_after_drop:
        counts *= config.n_evs / kept
    entries = {}
    for a, d in zip(*np.nonzero(counts)):
        kwh = config.per_ev_kwh * counts[a, d]
        if kwh >= MIN_CLASS_KWH:
            entries[EVClassKey(int(a) + 1, int(d) + 1)] = float(kwh)
    if not entries:
        raise ConfigError("demand is empty after pruning")
    return ClassDemand(entries)


def commute_demand(config: CommuteConfig, grid: TimeGrid) -> ClassDemand:
    return build_demand(config, discretize_distributions(config, grid), grid)


def load_pv_csv(path, grid: TimeGrid, peak_scale: float = 560.0) -> BaselineProfile:
    """Baseline from a PV trace: column ``kw`` (kW) or ``cf`` (share of ``peak_scale``).

    Generation is returned negated, since PV is the only nonflexible term.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "kw" in fields:
            column, scale = "kw", 1.0
        elif "cf" in fields:
            column, scale = "cf", float(peak_scale)
        else:
            raise PVParseError(f"{path}: needs a 'kw' or 'cf' column, found {fields}")
        values = []
        for lineno, row in enumerate(reader, start=2):
            try:
                value = float(row[column])
            except (TypeError, ValueError):
                raise PVParseError(f"{path}:{lineno}: cannot parse {row.get(column)!r}") from None
            if not math.isfinite(value):
                raise PVParseError(f"{path}:{lineno}: non-finite value")
            if value < 0:
                raise PVNegativeError(f"{path}:{lineno}: negative generation {value}")
            values.append(value * scale)
    if len(values) != grid.num_slots:
        raise PVRowCountError(f"{path}: {len(values)} rows for {grid.num_slots} slots")
    return BaselineProfile(0.0 - np.array(values))


def data_path(name: str) -> Path:
    return Path(str(resources.files("wfcharge") / "data" / name))


@dataclass(frozen=True)
class Scenario:
    name: str
    grid: TimeGrid
    baseline: BaselineProfile
    demand: ClassDemand
    cost: QuadraticCost
    commute: CommuteConfig | None = None
    sources: tuple[Path, ...] = ()
    cost_spec: Mapping[str, float] = field(default_factory=dict)

    def at_variance(self, pct: float) -> "Scenario":
        if self.commute is None:
            raise ConfigError("variance scaling needs a [commute] section")
        commute = self.commute.at_variance(pct)
        return replace(self, commute=commute, demand=commute_demand(commute, self.grid))

    def with_baseline(self, baseline: BaselineProfile) -> "Scenario":
        baseline.check_grid(self.grid)
        f = make_cost(self.cost_spec, baseline)
        return replace(self, baseline=baseline, cost=f)


def make_cost(spec: Mapping[str, Any], baseline: BaselineProfile) -> QuadraticCost:
    """Quadratic cost from a config table; a missing ``lin`` makes f increasing from min(baseline)."""
    quad = float(spec.get("quad", 0.5))
    const = float(spec.get("const", 0.0))
    low = float(baseline.power.min())
    if "lin" in spec:
        return QuadraticCost(quad, float(spec["lin"]), const, (low, math.inf))
    return QuadraticCost.increasing_from(low, quad, const)


def _read_config(path: Path) -> dict:
    raw = path.read_bytes()
    try:
        if path.suffix == ".json":
            return json.loads(raw)
        return tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def resolve_config_path(ref: str | Path) -> Path:
    """``builtin:NAME`` points at a bundled scenario; anything else is a file path."""
    ref = str(ref)
    if ref.startswith("builtin:"):
        path = data_path(ref.split(":", 1)[1] + ".toml")
        if not path.exists():
            raise ConfigError(f"no bundled scenario {ref!r}")
        return path
    return Path(ref)


def load_scenario(ref: str | Path, pv_path: str | Path | None = None,
                  variance_pct: float | None = None) -> Scenario:
    """Read a TOML/JSON scenario.  ``pv_path`` overrides the baseline CSV."""
    path = resolve_config_path(ref)
    cfg = _read_config(path)  # OSError propagates as an IO failure
    sources = [path]
    try:
        g = cfg["grid"]
        T = int(g["T"])
        delta = float(g.get("delta_hours", 1.0))
        start = parse_clock(g.get("start_label", "00:00"))
        grid = TimeGrid.hourly(T, start, delta)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad [grid] table: {exc}") from exc

    b = cfg.get("baseline", {})
    if pv_path is not None:
        csv_path = Path(pv_path)
    elif "csv_path" in b:
        csv_path = Path(b["csv_path"])
        if not csv_path.is_absolute():
            csv_path = path.parent / csv_path
    else:
        csv_path = None
    if csv_path is not None:
        baseline = load_pv_csv(csv_path, grid, float(b.get("peak_kw", 560.0)))
        sources.append(csv_path)
    elif "inline" in b:
        try:
            baseline = BaselineProfile(np.array(b["inline"], dtype=float)).check_grid(grid)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: bad inline baseline: {exc}") from exc
    else:
        baseline = BaselineProfile(np.zeros(T))

    cost_spec = dict(cfg.get("cost", {}))
    try:
        f = make_cost(cost_spec, baseline)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad [cost] table: {exc}") from exc

    commute = None
    try:
        if "commute" in cfg:
            commute = CommuteConfig(**cfg["commute"])
            if variance_pct is not None:
                commute = commute.at_variance(variance_pct)
            demand = commute_demand(commute, grid)
        else:
            demand = ClassDemand.from_triples(
                (e["a"], e["d"], e["kwh"]) for e in cfg.get("demand", [])).validate(grid)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad demand: {exc}") from exc
    return Scenario(str(cfg.get("name", path.stem)), grid, baseline, demand, f, commute,
                    tuple(sources), cost_spec)


def workday_scenario() -> Scenario:
    return load_scenario("builtin:workday")


def commuter_scenario(variance_pct: float = 100.0) -> Scenario:
    return load_scenario("builtin:commuter", variance_pct=variance_pct)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

import json

import numpy as np
import pytest

from wfcharge.model import TimeGrid
from wfcharge.scenario import (
    CommuteConfig,
    ConfigError,
    PVNegativeError,
    PVParseError,
    PVRowCountError,
    commute_demand,
    data_path,
    discretize_distributions,
    commuter_scenario,
    workday_scenario,
    load_pv_csv,
    load_scenario,
)

DAY = TimeGrid.hourly(24, 0.0, 1.0)


def test_pmfs_are_distributions():
    for pct in (100, 175, 300):
        arr, dep = discretize_distributions(CommuteConfig(variance_pct=pct), DAY)
        assert abs(arr.sum() - 1) <= 1e-12 and abs(dep.sum() - 1) <= 1e-12
        assert np.all(arr >= 0) and np.all(dep >= 0)


def test_arrivals_more_concentrated_than_departures():
    arr, dep = discretize_distributions(CommuteConfig(), DAY)
    assert arr.max() > dep.max()
    assert np.argmax(arr) == 8  # slot starting at 08:00
    assert np.argmax(dep) == 17  # slot ending at 18:00


def test_tiny_spread_is_a_point_mass():
    cfg = CommuteConfig(arrival_spread_min=1e-3, departure_spread_min=1e-3)
    demand = commute_demand(cfg, DAY)
    assert dict(demand.entries) == {(9, 18): pytest.approx(600.0)}


def test_wide_spread_support():
    arr, dep = discretize_distributions(CommuteConfig(variance_pct=300), DAY)
    arrival_hours = set(np.flatnonzero(arr))
    departure_end_hours = {int(t) + 1 for t in np.flatnonzero(dep)}
    assert {6, 10} <= arrival_hours
    assert 21 in departure_end_hours


@pytest.mark.parametrize("pct", [100, 200, 300])
def test_total_need_is_preserved(pct):
    demand = commute_demand(CommuteConfig(variance_pct=pct), DAY)
    assert demand.total == pytest.approx(600.0, rel=1e-9)
    assert all(a <= d for a, d in demand.keys())


def test_default_scale_is_identity():
    assert commuter_scenario(100).demand == commuter_scenario().demand
    assert CommuteConfig().sigma_hours(45.0) == pytest.approx(0.75)
    assert CommuteConfig(variance_pct=400, spread_scaling="sqrt").sigma_hours(45.0) == pytest.approx(1.5)


def test_config_validation():
    with pytest.raises(ConfigError):
        CommuteConfig(variance_pct=0)
    with pytest.raises(ConfigError):
        CommuteConfig(arrival_spread_min=-1)
    with pytest.raises(ConfigError):
        CommuteConfig(spread_scaling="cubic")


def test_pv_fixture():
    s = commuter_scenario()
    assert s.baseline.power.shape == (24,)
    assert np.all(s.baseline.power <= 0)
    assert 10 <= int(np.argmin(s.baseline.power)) <= 14
    assert s.cost.derivative(s.baseline.power.min()) >= 0


def test_pv_capacity_factor_scaling(tmp_path):
    p = tmp_path / "pv.csv"
    p.write_text("time,cf\n00:00,0\n01:00,0.5\n02:00,1.0\n")
    np.testing.assert_allclose(load_pv_csv(p, TimeGrid(3)).power, [0.0, -280.0, -560.0])
    p.write_text("time,kw\n00:00,1.5\n01:00,0\n02:00,2\n")
    np.testing.assert_allclose(load_pv_csv(p, TimeGrid(3)).power, [-1.5, 0.0, -2.0])


@pytest.mark.parametrize("body, error", [
    ("time,cf\n00:00,0\n01:00,0.5\n", PVRowCountError),
    ("time,cf\n00:00,0\n01:00,-0.5\n02:00,0\n", PVNegativeError),
    ("time,cf\n00:00,0\n01:00,abc\n02:00,0\n", PVParseError),
    ("time,watts\n00:00,0\n01:00,1\n02:00,0\n", PVParseError),
])
def test_pv_errors(tmp_path, body, error):
    p = tmp_path / "pv.csv"
    p.write_text(body)
    with pytest.raises(error):
        load_pv_csv(p, TimeGrid(3))


def test_builtin_configs():
    s = workday_scenario()
    assert s.grid.num_slots == 6 and s.grid.slot_hours == 2.0
    assert s.demand.total == 40.0
    assert data_path("commuter.toml").exists()
    with pytest.raises(ConfigError):
        load_scenario("builtin:nope")


def test_json_config_and_bad_tables(tmp_path):
    cfg = {"grid": {"T": 2}, "baseline": {"inline": [1.0, 2.0]},
           "demand": [{"a": 1, "d": 2, "kwh": 3.0}]}
    p = tmp_path / "s.json"
    p.write_text(json.dumps(cfg))
    s = load_scenario(p)
    assert s.name == "s" and s.demand[(1, 2)] == 3.0
    cfg["demand"][0]["d"] = 3
    p.write_text(json.dumps(cfg))
    with pytest.raises(ConfigError):
        load_scenario(p)
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_scenario(p)


def test_variance_rescaling_keeps_baseline():
    s = commuter_scenario()
    wide = s.at_variance(250)
    assert wide.commute.variance_pct == 250
    np.testing.assert_array_equal(wide.baseline.power, s.baseline.power)
    assert len(wide.demand) > len(s.demand)

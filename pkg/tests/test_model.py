import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wfcharge.model import (
    BaselineProfile,
    ClassDemand,
    DimensionError,
    EVClassKey,
    QuadraticCost,
    Schedule,
    TimeGrid,
    cost,
    total_load,
)
from wfcharge.scenario import workday_scenario

loads = st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=8)


def test_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(0)
    with pytest.raises(ValueError):
        TimeGrid(3, 0.0)
    grid = TimeGrid.hourly(6, 8.0, 2.0)
    assert grid.slot_labels == ("08:00", "10:00", "12:00", "14:00", "16:00", "18:00")
    assert list(grid.slots) == [1, 2, 3, 4, 5, 6]
    with pytest.raises(ValueError):
        grid.check_slot(7)


def test_class_key_and_demand_validation():
    grid = TimeGrid(4)
    EVClassKey(1, 4).validate(grid)
    with pytest.raises(ValueError):
        EVClassKey(3, 2).validate(grid)
    with pytest.raises(ValueError):
        EVClassKey(2, 5).validate(grid)
    with pytest.raises(ValueError):
        ClassDemand({(1, 2): -1.0})
    demand = ClassDemand.from_triples([(1, 2, 3.0), (1, 2, 1.0), (2, 2, 0.0)])
    assert demand[(1, 2)] == 4.0
    assert demand.total == 4.0


def test_quadratic_cost_monotonicity_check():
    with pytest.raises(ValueError):
        QuadraticCost(0.5, 0.0, 0.0, (-10.0, math.inf))
    f = QuadraticCost.increasing_from(-10.0)
    assert f.lin == 10.0
    assert f.derivative(-10.0) == 0.0


def test_total_load_empty_schedule_is_baseline():
    grid = TimeGrid(2)
    out = total_load(Schedule.empty(grid), BaselineProfile([-1.0, 2.0]))
    np.testing.assert_array_equal(out, [-1.0, 2.0])


def test_total_load_single_class():
    grid = TimeGrid(2)
    sched = Schedule(grid, {(1, 2): (1, 2)}, {(1, 2): np.array([1.0, 1.0])})
    np.testing.assert_array_equal(total_load(sched, BaselineProfile([0.0, 0.0])), [1.0, 1.0])


def test_total_load_dimension_mismatch():
    with pytest.raises(DimensionError):
        total_load(Schedule.empty(TimeGrid(3)), BaselineProfile([0.0, 0.0]))


def test_total_load_workday_matches_independent_sum():
    s = workday_scenario()
    from wfcharge.offline import solve_offline

    sol = solve_offline(s.demand, s.baseline, s.grid, s.cost)
    expected = [s.baseline.power[t] + sum(p[t] for p in sol.schedule.profiles.values())
                for t in range(s.grid.num_slots)]
    np.testing.assert_allclose(total_load(sol.schedule, s.baseline), expected, rtol=0, atol=1e-12)


def test_cost_examples():
    assert cost([0.0, 0.0], QuadraticCost(1.0, 0.0, 0.0)) == 0.0
    assert cost([1.0, 2.0], QuadraticCost(1.0, 1.0, 0.0)) == 8.0
    with pytest.raises(ValueError):
        cost([1.0, math.nan], QuadraticCost(1.0))


def test_schedule_rejects_power_outside_window():
    grid = TimeGrid(3)
    sched = Schedule(grid, {"g": (2, 3)}, {"g": np.array([1.0, 1.0, 0.0])})
    with pytest.raises(AssertionError):
        sched.check()
    ok = Schedule(grid, {"g": (2, 3)}, {"g": np.array([0.0, 1.0, 1.0])})
    ok.check({"g": 2.0})
    with pytest.raises(AssertionError):
        ok.check({"g": 2.5})


def test_types_are_immutable():
    base = BaselineProfile([1.0, 2.0])
    with pytest.raises(ValueError):
        base.power[0] = 3.0


@settings(max_examples=200, deadline=None)
@given(loads, st.randoms(use_true_random=False))
def test_cost_permutation_invariant(load, rnd):
    f = QuadraticCost(0.7, 80.0, 1.0, (-50.0, math.inf))
    shuffled = list(load)
    rnd.shuffle(shuffled)
    assert cost(shuffled, f) == pytest.approx(cost(load, f), rel=1e-12, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-50, 50), min_size=n, max_size=n),
    st.lists(st.floats(-50, 50), min_size=n, max_size=n))),
    st.floats(0, 1))
def test_cost_convex(xy, theta):
    f = QuadraticCost(0.7, 80.0, 1.0, (-50.0, math.inf))
    x, y = np.array(xy[0]), np.array(xy[1])
    mix = cost(theta * x + (1 - theta) * y, f)
    assert mix <= theta * cost(x, f) + (1 - theta) * cost(y, f) + 1e-9 * max(1.0, abs(mix))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=4, max_size=4),
       st.lists(st.floats(0, 10), min_size=4, max_size=4),
       st.lists(st.floats(-10, 10), min_size=4, max_size=4))
def test_total_load_linear_in_schedule(p1, p2, base):
    grid = TimeGrid(4)
    baseline = BaselineProfile(base)
    s1 = Schedule(grid, {(1, 4): (1, 4)}, {(1, 4): np.array(p1)})
    s2 = Schedule(grid, {(2, 4): (1, 4)}, {(2, 4): np.array(p2)})
    merged = total_load(s1.merge(s2), baseline)
    np.testing.assert_allclose(
        merged, total_load(s1, baseline) + total_load(s2, baseline) - baseline.power, atol=1e-12)

import math

import numpy as np
import pytest

from wfcharge.model import BaselineProfile, ClassDemand, QuadraticCost, TimeGrid

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def random_cost(rng, baseline):
    """Strictly convex quadratic, increasing from the lowest baseline value, offset to stay positive."""
    quad = float(rng.uniform(0.5, 2.0))
    low = float(np.min(baseline))
    lin = 2 * quad * abs(low) + float(rng.uniform(0, 1))
    return QuadraticCost(quad, lin, float(rng.uniform(0, 5)), (low, math.inf))


def random_instance(rng, max_slots=6, max_classes=4, max_vars=None):
    """Random offline instance; ``max_vars`` caps the summed window lengths."""
    while True:
        T = int(rng.integers(1, max_slots + 1))
        grid = TimeGrid(T, float(rng.choice([0.5, 1.0, 2.0])))
        entries = {}
        for _ in range(int(rng.integers(1, max_classes + 1))):
            a = int(rng.integers(1, T + 1))
            d = int(rng.integers(a, T + 1))
            entries[(a, d)] = entries.get((a, d), 0.0) + float(rng.uniform(0.5, 20))
        if max_vars is None or sum(d - a + 1 for a, d in entries) <= max_vars:
            break
    baseline = BaselineProfile(rng.uniform(-10, 10, T))
    return grid, baseline, ClassDemand(entries), random_cost(rng, baseline.power)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the summary is printed at the end of the run."""
    log = request.config.stash[_ACCEPTANCE_KEY]

    def report(name, ok, detail=""):
        log.append((name, bool(ok), detail))
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE_KEY, [])
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in log:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")

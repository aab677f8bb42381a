import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from invtorus.fields import Grid
from invtorus.scenarios import corpus_member

settings.register_profile(
    "invtorus", deadline=None, max_examples=15, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("invtorus")


@pytest.fixture
def grid64():
    return Grid.square(64)


@pytest.fixture
def random_gp(grid64):
    """A smooth random SPD metric and positive weight at N = 64."""
    return corpus_member(7).sample(grid64)


def trig_field(rng, grid, K=3, amp=1.0):
    x, y = grid.nodes()
    v = np.zeros(grid.shape)
    for kx in range(-K, K + 1):
        for ky in range(0, K + 1):
            if ky == 0 and kx <= 0:
                continue
            a, b = rng.normal(size=2) / (1 + kx * kx + ky * ky)
            arg = 2 * np.pi * (kx * x + ky * y)
            v += a * np.cos(arg) + b * np.sin(arg)
    return amp * v


@pytest.fixture(autouse=True)
def _quiet_floor_warnings():
    from invtorus.pharmonic import FloorLimitedWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FloorLimitedWarning)
        yield


_CRITERIA_KEY = pytest.StashKey[list]()


@pytest.fixture
def record_criterion(request):
    """Log one pass/fail line per acceptance criterion; lines are repeated in the terminal summary."""
    log = request.config.stash.setdefault(_CRITERIA_KEY, [])

    def record(number, ok, runtime, budget, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  ({runtime:.1f} s of {budget:.0f} s)  {detail}"
        log.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

import warnings

import numpy as np
import pytest

from syncloc.sdp import SdpSolution, Status
from syncloc.sim import SimConfig, simulate_pair

SMALL = SimConfig(odom_count=2000, bearing_count=100)


@pytest.fixture(scope="session")
def scenario_cache():
    cache = {}

    def get(offset=0.0, sigma=0.0, seed=0, config=SimConfig(), gauge=True):
        key = (offset, sigma, seed, config, gauge)
        if key not in cache:
            cache[key] = simulate_pair(config, offset=offset, sigma=sigma, seed=seed, gauge=gauge)
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_tightness_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="relaxation not certified tight")
        yield


def solution_from(Z):
    """Wrap a bare matrix so the extraction helpers can consume it."""
    Z = np.asarray(Z, dtype=float)
    w = np.linalg.eigvalsh(Z)[::-1]
    return SdpSolution(Z, 0.0, 0.0, 0.0, 0, w, Status.OPTIMAL)


ACCEPTANCE: dict = {}


def report_criterion(number: int, passed: bool, detail: str) -> None:
    """Record one acceptance line; the terminal summary prints them in order."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])

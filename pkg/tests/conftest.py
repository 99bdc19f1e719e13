import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def brute_force_cost(C: np.ndarray) -> float:
    """Cheapest permutation of a square cost matrix, averaged over rows."""
    n = C.shape[0]
    rows = np.arange(n)
    return min(C[rows, list(perm)].sum() for perm in itertools.permutations(range(n))) / n


def sorted_matching_cost(x, y, p=2.0) -> float:
    return float(np.mean(np.abs(np.sort(x) - np.sort(y)) ** p))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def _report(number, ok, detail):
        line = f"criterion {number:<4} {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)

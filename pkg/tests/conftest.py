import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from linarb.graph import Graph

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CRITERIA: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[n])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def cycle(n: int) -> Graph:
    return Graph.from_edges(n, [(j, (j + 1) % n) for j in range(n)])


def path(n: int) -> Graph:
    return Graph.from_edges(n, [(j, j + 1) for j in range(n - 1)])


def complete(n: int) -> Graph:
    return Graph.from_edges(n, [(a, b) for a in range(n) for b in range(a + 1, n)])

import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from capclust.geom import regular_polygon

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def spread_sites(rng, k, lo=-0.7, hi=0.7, min_gap=1e-2):
    """k random sites no two closer than ``min_gap``."""
    while True:
        s = rng.uniform(lo, hi, (k, 2))
        if k == 1:
            return s
        d = np.linalg.norm(s[:, None] - s[None], axis=2) + np.eye(k)
        if d.min() > min_gap:
            return s


def disk_points(rng, n, radius=0.98):
    out = np.empty((0, 2))
    while len(out) < n:
        p = rng.uniform(-1, 1, (2 * n, 2))
        out = np.vstack([out, p[np.einsum("ij,ij->i", p, p) < radius ** 2]])
    return out[:n]


def near_equal_caps(n, k):
    """Integer caps as equal as possible, summing to n."""
    c = np.full(k, n // k)
    c[: n % k] += 1
    return c


@pytest.fixture
def disk():
    return regular_polygon(64)


@pytest.fixture
def square():
    return UNIT_SQUARE.copy()


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

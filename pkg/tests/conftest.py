import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_conductances(rng, n, density=0.6):
    """Connected random symmetric conductance matrix: a ring plus random extra edges."""
    c = np.zeros((n, n))
    for i in range(n):
        j = (i + 1) % n
        c[i, j] = c[j, i] = rng.uniform(0.2, 2.0)
    extra = np.triu(rng.random((n, n)) < density, 1) * rng.uniform(0.05, 3.0, (n, n))
    c = c + extra + extra.T
    np.fill_diagonal(c, 0.0)
    return c


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

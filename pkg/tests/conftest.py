import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from emff.config import SwarmConfig

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# Acceptance lines collected by tests/test_acceptance.py, printed at the end.
ACCEPTANCE_LINES = {}


def record_acceptance(key, line):
    ACCEPTANCE_LINES[key] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (isinstance(k, str), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def random_swarm(rng, n):
    masses = rng.uniform(1.0, 5.0, n)
    inertias = []
    for _ in range(n):
        a = rng.normal(size=(3, 3))
        inertias.append(a @ a.T + 0.5 * np.eye(3))
    return SwarmConfig(masses, np.array(inertias))


def random_q(rng, n, pos=1.0, mrp=0.8):
    r = rng.uniform(-pos, pos, 3 * (n - 1))
    s = rng.normal(size=(n, 3))
    s *= (rng.uniform(0, mrp, n) / np.linalg.norm(s, axis=1))[:, None]
    return np.concatenate([r, s.ravel()])


def separated_q(rng, sw, min_sep=0.3, pos=1.0, mrp=0.8):
    """Random q whose satellites are all at least min_sep apart."""
    from emff.controllability import min_separation
    while True:
        q = random_q(rng, sw.n, pos, mrp)
        if min_separation(q, sw) > min_sep:
            return q


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def fig_swarm():
    return SwarmConfig.paper_fig123()

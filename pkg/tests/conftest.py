import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cap_anneal import ClusterState, validate_dataset

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_instance(rng, n=6, k=2, dim=2, beta=1.0, typed=0):
    """Random weighted dataset and state; ``typed`` > 0 gives that many types."""
    pts = rng.normal(size=(n, dim))
    w = rng.uniform(0.2, 1.0, size=n)
    types = None
    if typed:
        types = np.concatenate([np.arange(typed), rng.integers(0, typed, size=n - typed)])
    ds = validate_dataset(pts, w, types)
    Y = rng.normal(size=(k, dim))
    le = np.log(rng.dirichlet(np.ones(k)))
    if typed:
        le = np.log(rng.dirichlet(np.ones(k * typed)).reshape(k, typed))
    return ds, ClusterState(Y, le, beta)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

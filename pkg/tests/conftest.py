import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gaplm.core import ClusterDataset

settings.register_profile("gaplm", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("gaplm")


def random_dataset(rng, n=40, T=4, d_x=2, d_z=3, family="gaussian", unequal=False):
    """Small random clustered dataset; responses are noise around a smooth truth."""
    sizes = rng.integers(1, T + 1, n) if unequal else np.full(n, T)
    N = int(sizes.sum())
    x = rng.random((N, d_x))
    z = np.ones((N, d_z))
    z[:, 1:] = rng.standard_normal((N, d_z - 1))
    eta = 0.5 * z[:, 1:].sum(axis=1) + np.sin(2 * np.pi * x[:, 0])
    if family == "gaussian":
        y = eta + rng.standard_normal(N)
    else:
        y = (rng.random(N) < 1 / (1 + np.exp(-eta))).astype(float)
    return ClusterDataset.from_arrays(y, x, z, sizes)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line, print it, and fail the test if it did not pass."""
    lines = request.config.stash[_VERDICTS]

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)

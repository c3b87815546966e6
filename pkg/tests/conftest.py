import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, m, jitter=0.2):
    """Random covariance with unit diagonal and comfortably bounded condition number."""
    a = rng.standard_normal((m, m))
    s = a @ a.T / m + jitter * np.eye(m)
    d = np.sqrt(np.diag(s))
    s = s / np.outer(d, d)
    return 0.5 * (s + s.T)


def random_instance(rng, m_range=(2, 12)):
    """Random ``(u, sigma, S, sigma_e2)`` with ``S`` a proper nonempty subset."""
    m = int(rng.integers(*m_range))
    sigma = random_spd(rng, m)
    size = int(rng.integers(1, m))
    subset = np.sort(rng.choice(m, size=size, replace=False))
    u = rng.standard_normal(m)
    return u, sigma, subset, float(rng.uniform(0.1, 2.0))


def complement(subset, m):
    return np.setdiff1d(np.arange(m), subset)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

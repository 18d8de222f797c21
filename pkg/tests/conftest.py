import numpy as np
import pytest

from vcbackfit import Dataset, Grid

ACCEPTANCE_LINES = []


def make_data(n=80, d=3, seed=0, rho=0.3, noise=0.3, const_first=True):
    """Random varying-coefficient data with smooth truth; Z_1 = 1 when ``const_first``."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, d))
    Z = rng.normal(size=(n, d))
    if d > 1:
        Z[:, 1:] = rho * Z[:, :1] + np.sqrt(1 - rho**2) * Z[:, 1:]
    if const_first:
        Z[:, 0] = 1.0
    mean = sum(np.sin(2 + j + 2 * X[:, j]) * Z[:, j] for j in range(d))
    return Dataset(X, Z, mean + noise * rng.normal(size=n))


@pytest.fixture
def small_grid():
    return Grid(41)


@pytest.fixture
def data3():
    return make_data(120, 3, seed=11)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

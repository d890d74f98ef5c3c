import numpy as np
import pytest

from preintqmc.brownian import TimeGrid, factorize
from preintqmc.payoff import MarketParams, make_digital_asian

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def market():
    return MarketParams()


@pytest.fixture(scope="session")
def asian():
    """Digital Asian integrands with the PCA construction, keyed by d."""
    cache = {}

    def build(d, method="pca"):
        if (d, method) not in cache:
            cache[d, method] = make_digital_asian(MarketParams(), factorize(TimeGrid(d), method))
        return cache[d, method]

    return build


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def record_criterion():
    """Log one pass/fail line per acceptance criterion (echoed in the summary)."""

    def record(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

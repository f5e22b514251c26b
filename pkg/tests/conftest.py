import numpy as np
import pytest

from bckey.scenarios import bsc_example

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_channel(rng: np.random.Generator, rows: int, cols: int, sparse: bool = True) -> np.ndarray:
    """Row-stochastic matrix; with ``sparse`` some entries are exactly zero."""
    m = rng.dirichlet(np.ones(cols), size=rows)
    if sparse and cols > 1 and rng.random() < 0.3:
        mask = rng.random(m.shape) < 0.3
        mask[np.arange(rows), rng.integers(0, cols, rows)] = False
        m = np.where(mask, 0.0, m)
        m /= m.sum(axis=1, keepdims=True)
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


@pytest.fixture(scope="session")
def single_model():
    """Uniform source, encoder BSC(0.05), one decoder BSC(0.05)."""
    return bsc_example(0.05, 1)

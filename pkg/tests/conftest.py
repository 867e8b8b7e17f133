import numpy as np
import pytest


def two_blobs(n=200, d=2, gap=6.0, seed=0):
    """Two unit-variance Gaussian blobs centred at -gap/2 and +gap/2 along the first axis."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.standard_normal((n, d))
    X[:, 0] += np.where(y == 1, gap / 2, -gap / 2)
    return X, y


@pytest.fixture
def blobs():
    return two_blobs()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

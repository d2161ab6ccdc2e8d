import numpy as np
import pytest

from commod.basemodel import train_logreg
from commod.synthetic import make_synthetic
from commod.tabular import SplitSpec, split


@pytest.fixture(scope="session")
def small_synth():
    ds = make_synthetic(1200, seed=0)
    train, test = split(ds, SplitSpec(0.7, 0))
    base = train_logreg(train)
    return ds, train, test, base


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

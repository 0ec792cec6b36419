import numpy as np
import pytest

from nucate.data import Dataset
from nucate.synthetic import SyntheticConfig, sample_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_synthetic():
    ds, orc = sample_dataset(SyntheticConfig(seed=3), 600)
    return ds, orc


@pytest.fixture
def toy_dataset():
    x = np.arange(12, dtype=float).reshape(6, 2)
    return Dataset(x, [0, 1, 0, 1, 1, 0], np.linspace(-1, 1, 6), tau=np.ones(6), mu=np.full(6, 0.5))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

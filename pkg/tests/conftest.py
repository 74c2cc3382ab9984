import numpy as np
import pytest
from hypothesis import settings

from lpanova.lpfit import Dataset

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# acceptance lines collected during the run, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def uniform_data(seed, n=120, sigma=0.3, f=lambda x: np.sin(2 * np.pi * x)):
    r = np.random.default_rng(seed)
    x = r.uniform(0, 1, n)
    return Dataset(x, f(x) + sigma * r.normal(size=n))

import sys

import numpy as np
import pytest

from relay_sim.heights import AtomMixture, Exponential, Uniform


@pytest.fixture
def exp1():
    return Exponential(1.0)


@pytest.fixture
def atom_model():
    return AtomMixture(Uniform(1.0), 1.0, 0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])

"""Exit criteria, each run once at a seed fixed in advance.

Run with ``pytest -s tests/test_acceptance.py`` to see one PASS/FAIL line
per criterion.
"""

import pytest

from relay_sim.experiments import ACCEPTANCE, run_experiment

SEED = 2024
RESULTS = {}


@pytest.mark.acceptance
@pytest.mark.parametrize("num,name", ACCEPTANCE, ids=[f"{n:02d}_{k}" for n, k in ACCEPTANCE])
def test_criterion(num, name):
    res = run_experiment({"experiment": name, "seed": SEED})
    line = f"{num:2d} {name}: {'PASS' if res.passed else 'FAIL'}"
    RESULTS[num] = line
    print("\n" + line)
    assert res.passed, res.to_json()

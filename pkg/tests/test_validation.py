import json
import math

import numpy as np
import pytest
from scipy import stats

from relay_sim.validation import (
    ECDF,
    EmptySample,
    McReport,
    bin_integrals,
    histogram_density_distance,
    ks_critical,
    ks_distance,
    mean_ci,
    to_json,
    wilson_ci,
)

expcdf = lambda t: -np.expm1(-np.maximum(t, 0.0))


def test_ks_null_rejection_rate():
    assert ks_critical(100_000) == pytest.approx(1.3581 / math.sqrt(100_000), rel=1e-4)
    rng = np.random.default_rng(0)
    d = [ks_distance(rng.exponential(1.0, 100_000), expcdf) for _ in range(100)]
    assert sum(v < 0.0061 for v in d) >= 95
    # at the exact 5% critical value the acceptance rate is 95% up to binomial noise
    assert sum(v < ks_critical(100_000) for v in d) >= 95 - 7


def test_ks_constant_sample_point_mass():
    cdf = lambda t: (np.asarray(t) >= 2.0).astype(float)
    left = lambda t: (np.asarray(t) > 2.0).astype(float)
    assert ks_distance(np.full(50, 2.0), cdf, left) == 0.0


def test_ks_uniform_vs_exponential():
    rng = np.random.default_rng(1)
    d = ks_distance(rng.uniform(0, 1, 20_000), expcdf)
    grid = np.linspace(0, 1, 100_001)
    # the gap u - (1 - e^-u) grows on [0, 1]; the supremum 1/e sits at u = 1
    assert np.max(np.abs(grid - expcdf(grid))) == pytest.approx(math.exp(-1), abs=1e-9)
    assert d > 0.2 and d == pytest.approx(math.exp(-1), abs=0.01)


def test_ks_matches_scipy():
    rng = np.random.default_rng(2)
    x = rng.exponential(1.0, 5000)
    assert ks_distance(x, expcdf) == pytest.approx(stats.kstest(x, "expon").statistic, abs=1e-12)


def test_ks_handles_atoms_and_infinities():
    x = np.concatenate([np.full(300, 1.0), np.full(700, np.inf)])
    cdf = lambda t: np.where(np.asarray(t) >= 1.0, 0.3, 0.0)
    left = lambda t: np.where(np.asarray(t) > 1.0, 0.3, 0.0)
    assert ks_distance(x, cdf, left) == pytest.approx(0.0)
    assert ks_distance(x, cdf) == pytest.approx(0.3)


def test_ecdf():
    e = ECDF([1, 2, 2, 3])
    assert e(2) == 0.75 and e.left(2) == 0.25
    with pytest.raises(EmptySample):
        ECDF([])


def test_mean_ci_and_wilson():
    m, lo, hi = mean_ci([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5 and lo < m < hi
    p, lo, hi = wilson_ci(0, 100)
    assert p == 0 and lo == pytest.approx(0.0, abs=1e-15) and hi > 0
    with pytest.raises(EmptySample):
        mean_ci([])


def test_report_validation():
    with pytest.raises(ValueError):
        McReport("x", 2.0, (0.0, 1.0), 10, 0)
    r = McReport("x", 0.5, (0.0, 1.0), 10, 3, extra={"v": np.inf})
    assert json.loads(to_json(r.to_dict()))["extra"]["v"] == "inf"


def test_bin_integrals_exact_for_polynomials():
    edges = [np.linspace(0, 1, 5), np.linspace(0, 2, 3)]
    vals = bin_integrals(lambda x, y: x * y, edges)
    assert vals.sum() == pytest.approx(1.0)
    v1 = bin_integrals(lambda x: x**2, [np.linspace(0, 3, 4)], sub=3)
    assert v1.sum() == pytest.approx(9.0)


def _exp2d(n, rng):
    return np.column_stack([rng.exponential(1.0, n), rng.exponential(1.0, n)])


def test_histogram_perfect_match_rarely_flags():
    rng = np.random.default_rng(3)
    dens = lambda x, y: np.exp(-x - y)
    edges = [np.linspace(0, 4, 21)] * 2
    frac = []
    for _ in range(100):
        rep = histogram_density_distance(_exp2d(50_000, rng), dens, edges)
        frac.append(rep.fraction_flagged)
    assert np.mean(frac) < 0.001


def test_histogram_scaled_density_flags_majority():
    rng = np.random.default_rng(4)
    edges = [np.linspace(0, 2, 11)] * 2
    rep = histogram_density_distance(_exp2d(200_000, rng), lambda x, y: 2 * np.exp(-x - y), edges)
    assert rep.fraction_flagged > 0.5


def test_histogram_low_expectation_excluded():
    rep = histogram_density_distance(np.array([[0.5, 0.5]]), lambda x, y: np.full(np.shape(x), 1e-3),
                                     [np.linspace(0, 1, 3)] * 2, n_total=10)
    assert rep.n_used == 0 and rep.flagged.sum() == 0

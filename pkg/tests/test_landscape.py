import math

import numpy as np
import pytest
from scipy import stats

from relay_sim.landscape import (
    DuplicateBase,
    IntensityProfile,
    Landscape,
    NegativeLine,
    below_curve_probability,
    below_line_probability,
    exceed_line_measure,
    extend_right,
    generate_window,
    palm_add,
    sample_rows,
)
from relay_sim.heights import Exponential, Uniform


def test_window_count_mean(exp1):
    counts = [len(generate_window(2.0, exp1, (0, 10), np.random.default_rng(s))) for s in range(10_000)]
    assert abs(np.mean(counts) - 20.0) < 3 * math.sqrt(20 / 1e4) * 4


def test_null_interval_is_empty(exp1, rng):
    assert len(generate_window(1.0, exp1, (0, 0), rng)) == 0


def test_window_heights_follow_law(exp1, rng):
    land = generate_window(1.0, exp1, (0, 100), rng)
    assert stats.kstest(land.h, "expon").statistic < 0.15
    big = generate_window(1.0, exp1, (0, 20_000), rng)
    assert stats.kstest(big.h, "expon").statistic < 0.05
    assert np.all(np.diff(big.x) > 0)


def test_extend_by_zero_is_identity(exp1, rng):
    land = generate_window(1.0, exp1, (0, 5), rng)
    x, h = land.x.copy(), land.h.copy()
    extend_right(land, 0.0)
    assert np.array_equal(land.x, x) and np.array_equal(land.h, h) and land.hi == 5


def test_two_extensions_match_one_in_distribution(exp1):
    a, b = [], []
    for s in range(10_000):
        r = np.random.default_rng(s)
        l1 = Landscape(np.empty(0), np.empty(0), 0.0, 0.0, IntensityProfile(1.0), exp1, r)
        l1.extend_right(5).extend_right(5)
        a.append(len(l1))
        l2 = Landscape(np.empty(0), np.empty(0), 0.0, 0.0, IntensityProfile(1.0), exp1, np.random.default_rng(10**6 + s))
        b.append(len(l2.extend_right(10)))
    assert stats.ks_2samp(a, b).statistic < 0.02


def test_extension_adds_poisson_count(exp1):
    added = []
    for s in range(5000):
        land = generate_window(3.0, exp1, (0, 1), np.random.default_rng(s))
        n0 = len(land)
        added.append(len(land.extend_right(1.0)) - n0)
    added = np.array(added)
    assert abs(added.mean() - 3.0) < 4 * math.sqrt(3 / 5000)
    assert abs(added.var() - 3.0) < 0.3


def test_below_line_trivial_and_level(exp1):
    u = Uniform(1.0)
    assert below_line_probability(1.0, u, (0, 5), (0, 2.0), 0.0) == 1.0
    assert below_line_probability(1.0, exp1, (0, 1), (0, 0), 0.0) == pytest.approx(math.exp(-1), abs=1e-14)


def test_below_line_sloped_against_mc(exp1, rng):
    p = below_line_probability(1.0, exp1, (0, 2), (0, 1), 1.0)
    assert p == pytest.approx(math.exp(-(math.exp(-1) - math.exp(-3))), abs=1e-12)
    assert p == pytest.approx(0.72754, abs=1e-5)
    n = 100_000
    counts = rng.poisson(2.0, n)
    ok = np.ones(n, dtype=bool)
    xs = rng.uniform(0, 2, counts.sum())
    hs = rng.exponential(1.0, counts.sum())
    owner = np.repeat(np.arange(n), counts)
    np.logical_and.at(ok, owner, hs <= 1 + xs)
    assert abs(ok.mean() - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_below_line_monotone(exp1):
    ps = [below_line_probability(1.0, exp1, (0, L), (0, 1), 0.5) for L in (0.5, 1, 2, 4)]
    assert all(a >= b for a, b in zip(ps, ps[1:]))
    assert below_line_probability(2.0, exp1, (0, 1), (0, 1), 0.5) <= below_line_probability(1.0, exp1, (0, 1), (0, 1), 0.5)
    assert below_line_probability(1.0, exp1, (0, 1), (0, 2), 0.5) >= below_line_probability(1.0, exp1, (0, 1), (0, 1), 0.5)


def test_negative_line_rejected(exp1):
    with pytest.raises(NegativeLine):
        exceed_line_measure(1.0, exp1, (0, 3), (0, 1), -1.0)


def test_below_curve(exp1, rng):
    assert below_curve_probability(1.0, exp1, (0, 1), lambda a: math.inf) == 1.0
    lin = below_curve_probability(1.0, exp1, (0, 2), lambda a: 1 + a)
    assert lin == pytest.approx(below_line_probability(1.0, exp1, (0, 2), (0, 1), 1.0), abs=1e-8)
    disc = lambda a: math.sqrt(max(1 - a * a, 0.0))
    p = below_curve_probability(1.0, exp1, (0, 1), disc)
    assert 0 < p < 1
    n = 100_000
    counts = rng.poisson(1.0, n)
    xs = rng.uniform(0, 1, counts.sum())
    hs = rng.exponential(1.0, counts.sum())
    ok = np.ones(n, dtype=bool)
    np.logical_and.at(ok, np.repeat(np.arange(n), counts), hs <= np.sqrt(1 - xs**2))
    assert abs(ok.mean() - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_palm_add(exp1, rng):
    empty = Landscape(np.empty(0), np.empty(0), -1.0, 1.0, IntensityProfile(1.0), exp1, rng)
    palm_add(empty, (0.0, 2.0))
    assert empty.buildings == [(0.0, 2.0)]
    land = generate_window(1.0, exp1, (-5, 5), rng)
    n = len(land)
    palm_add(land, (0.123456789, 1.5))
    assert len(land) == n + 1 and land.h[land.index_of(0.123456789)] == 1.5
    with pytest.raises(DuplicateBase):
        palm_add(land, (0.123456789, 1.0))


def test_duplicate_bases_rejected(exp1):
    with pytest.raises(DuplicateBase):
        Landscape(np.array([1.0, 1.0]), np.array([1.0, 2.0]), 0.0, 2.0, IntensityProfile(1.0), exp1)


def test_csv_roundtrip(exp1, rng):
    land = generate_window(1.0, exp1, (0, 20), rng)
    text = land.to_csv()
    assert "x,h" in text.splitlines()[1]
    back = Landscape.from_csv(text, 1.0, exp1)
    assert np.array_equal(back.x, land.x) and np.array_equal(back.h, land.h)
    assert back.covered == land.covered
    assert back.to_csv() == text


def test_piecewise_profile_counts(exp1, rng):
    prof = IntensityProfile.piecewise([0.0, 10.0], [1.0, 3.0, 0.5])
    assert prof.mass(-5, 15) == pytest.approx(5 + 30 + 2.5)
    counts = [len(generate_window(prof, exp1, (-5, 15), np.random.default_rng(s))) for s in range(3000)]
    assert abs(np.mean(counts) - 37.5) < 4 * math.sqrt(37.5 / 3000)
    assert prof.inverse(prof.cumulative(7.0)) == pytest.approx(7.0)


def test_sample_rows_shape_and_order(exp1, rng):
    X, H = sample_rows(1.0, exp1, np.zeros(4), 50, rng)
    assert X.shape == (4, 50) and np.all(np.diff(X, axis=1) > 0) and np.all(X > 0)
    gaps = np.diff(np.hstack([np.zeros((4, 1)), X]), axis=1).ravel()
    assert abs(gaps.mean() - 1.0) < 0.3

import math

import numpy as np
import pytest

from relay_sim.blockage import Scheme
from relay_sim.landscape import IntensityProfile, Landscape, generate_window
from relay_sim.relay_tree import (
    build_forest,
    classify_eft,
    expected_building_count,
    expected_zone_length_given_angle,
    expected_zone_length_palm,
    foil_partition,
    foil_relation,
    forest_diagnostics,
    hull_parents,
    is_eventually_relayed,
    mass_transport_check,
    mc_palm_zone,
    mc_zone_given_angle,
    paired_mean_ci,
    relay_zone,
    reverse_shade_contains,
    shadow_cutting_building,
    zone_length_cdf,
)


def _fixed(buildings, heights, lo, hi, rate=1e-12):
    xs, hs = zip(*buildings)
    return Landscape(np.array(xs, float), np.array(hs, float), lo, hi, IntensityProfile(rate), heights,
                     np.random.default_rng(0))


FOUR = [(-2, 0.5), (-1, 2.9), (0, 3), (2, 4)]


def test_reverse_shade_examples():
    assert reverse_shade_contains((0, 3), (2, 4), (0, 2.0))
    assert reverse_shade_contains((0, 3), (2, 4), (-1, 2.4))
    assert not reverse_shade_contains((0, 3), (2, 4), (-1, 2.9))
    assert not reverse_shade_contains((0, 3), 0.5, (1, 0))


def test_shadow_cutting_example(exp1):
    land = _fixed(FOUR, exp1, -3, 3)
    assert shadow_cutting_building(land, (0, 3), slope=0.5) == (-1.0, 2.9)


def test_shadow_cutting_level_blocker(exp1):
    land = _fixed([(-3, 0.2), (-1, 5.0), (0, 3), (2, 3)], exp1, -4, 3)
    assert shadow_cutting_building(land, (0, 3), slope=0.0) == (-1.0, 5.0)


def test_eventual_relay_methods_agree(exp1):
    land = _fixed(FOUR, exp1, -3, 3)
    assert is_eventually_relayed(land, (0, 3), (0, 3))
    assert not is_eventually_relayed(land, (1, 0), (0, 3))
    for method in ("characterise", "iterate"):
        assert is_eventually_relayed(land, (-0.5, 0), (0, 3), method)


def test_eventual_relay_random_agreement(exp1):
    rng = np.random.default_rng(4)
    for _ in range(30):
        land = generate_window(1.0, exp1, (-30, 30), rng)
        i = int(np.argmin(np.abs(land.x)))
        apex = (land.x[i], land.h[i])
        for _ in range(5):
            p = (float(rng.uniform(apex[0] - 5, apex[0])), float(rng.uniform(0, 3)))
            a = is_eventually_relayed(land, p, apex, "characterise")
            b = is_eventually_relayed(land, p, apex, "iterate")
            assert a == b


def test_forest_three_buildings(exp1):
    land = _fixed([(1, 1), (2, 3), (3, 1)], exp1, 0, 3)
    f = build_forest(land)
    assert f.parent[0] == 1
    assert list(f.censored) == [False, True, True]


def test_forest_acyclic_and_rightward(exp1, rng):
    f = build_forest(generate_window(1.0, exp1, (0, 300), rng))
    ok = f.parent >= 0
    assert np.all(f.x[f.parent[ok]] > f.x[ok])
    # censoring comes from the missing right context
    assert np.median(f.x[f.censored]) > np.median(f.x)


def test_spine_under_next_max(atom_model, rng):
    f = build_forest(generate_window(1.0, atom_model, (0, 200), rng), Scheme.NEXT_MAX)
    top = np.flatnonzero(f.top)
    spine = f.spine_flags()
    assert np.array_equal(np.flatnonzero(spine), top)
    # height-S nodes chain left to right
    for a, b in zip(top[:-1], top[1:]):
        assert f.parent[a] == b
    assert forest_diagnostics(f)["spine_ok"]


def test_self_absorbing_forest(atom_model, rng):
    f = build_forest(generate_window(1.0, atom_model, (0, 200), rng), Scheme.SELF_ABSORBING)
    top = np.flatnonzero(f.top)
    assert np.all(f.parent[top] == top)
    d = forest_diagnostics(f)
    assert d["absorbed_fraction"] == 1.0 and d["cycles_only_self_loops"]


def test_foils(exp1, rng):
    f = build_forest(generate_window(1.0, exp1, (0, 200), rng))
    ok = np.flatnonzero(~f.censored)
    parents = f.parent[ok]
    vals, counts = np.unique(parents, return_counts=True)
    p = vals[np.argmax(counts)]
    kids = ok[parents == p]
    assert foil_relation(f, kids[0], kids[1], 1) == "same"
    assert foil_relation(f, kids[0], p, 5) == "different"
    labels = foil_partition(f, 1)
    assert labels[kids[0]] == labels[kids[1]]


def test_spine_foils_differ(atom_model, rng):
    f = build_forest(generate_window(1.0, atom_model, (0, 200), rng), Scheme.NEXT_MAX)
    top = np.flatnonzero(f.top)
    assert foil_relation(f, top[0], top[1], 10) == "different"


def test_classify(exp1, atom_model):
    assert classify_eft(exp1, "tau").label == "I/I"
    assert classify_eft(exp1, "tau2").label == "I/I"
    assert classify_eft(atom_model, "tau1").label == "F/F"
    assert classify_eft(atom_model, "tau2").label == "I/F"


def test_zone_cdf_values(exp1):
    assert zone_length_cdf(1.0, exp1, 2.0, 1.0, 0.0) == 0.0
    assert zone_length_cdf(1.0, exp1, 2.0, 1.0, 2.5) == 1.0
    assert zone_length_cdf(1.0, exp1, 2.0, 1.0, 2.0) == 1.0
    assert zone_length_cdf(1.0, exp1, 2.0, 1.0, 2.0, left_limit=True) < 1.0
    v = zone_length_cdf(1.0, exp1, 2.0, 1.0, 1.0)
    assert v == pytest.approx(1 - math.exp(-(math.exp(-1) - math.exp(-2))), abs=1e-12)
    assert v == pytest.approx(0.2075, abs=5e-5)
    t = np.linspace(0, 2, 101)
    assert np.all(np.diff(zone_length_cdf(1.0, exp1, 2.0, 1.0, t)) >= 0)


def test_zone_mc(exp1):
    res = mc_zone_given_angle(1.0, exp1, 2.0, 1.0, 20_000, seed=3)
    ell, cnt = res["ell"], res["count"]
    assert np.all(ell <= 2.0)
    mean = expected_zone_length_given_angle(1.0, exp1, 2.0, 1.0)
    assert abs(ell.mean() - mean) < 3 * ell.std() / math.sqrt(ell.size)
    ec = expected_building_count(1.0, exp1, 2.0, 1.0)
    assert abs(cnt.mean() - ec) < 3 * cnt.std() / math.sqrt(cnt.size)
    assert abs(np.mean(ell <= 1.0) - zone_length_cdf(1.0, exp1, 2.0, 1.0, 1.0)) < 0.012


def test_zone_length_limits(exp1):
    assert expected_zone_length_given_angle(1.0, exp1, 2.0, math.inf) == 0.0
    assert expected_zone_length_given_angle(1.0, exp1, 2.0, 4.0) <= 0.5
    assert expected_building_count(1.0, exp1, 0.0, 1.0) == 0.0
    assert expected_building_count(1.0, exp1, 2.0, 1.0) >= 0.0


def test_palm_closed_forms(exp1, atom_model):
    assert expected_zone_length_palm(1.0, exp1, 1.0) == pytest.approx(math.exp(-1) * (math.exp(2) - 1) / 2, abs=1e-10)
    assert expected_zone_length_palm(1.0, atom_model, 1.0, "tau2") == math.inf
    assert expected_zone_length_palm(1.0, atom_model, 1.0, "tau1") == pytest.approx(5.0)


def test_palm_mc(exp1):
    res = mc_palm_zone(1.0, exp1, 20_000, seed=1, beta=1.0)
    ell = res["ell"]
    target = expected_zone_length_palm(1.0, exp1, 1.0)
    assert abs(ell.mean() - target) < 3 * ell.std() / math.sqrt(ell.size)


def test_relay_zone_contains_apex(exp1, rng):
    land = generate_window(1.0, exp1, (-20, 20), rng)
    i = int(np.argmin(np.abs(land.x)))
    z = relay_zone(land, (land.x[i], land.h[i]))
    assert z.contains((land.x[i], land.h[i]))
    assert z.ground_length >= 0


def test_hull_parents_bruteforce(rng):
    x = np.sort(rng.uniform(0, 50, 200))
    h = rng.exponential(1.0, 200)
    par = hull_parents(x, h)
    for i in range(199):
        s = (h[i + 1:] - h[i]) / (x[i + 1:] - x[i])
        assert par[i] == i + 1 + int(np.argmax(s))
    assert par[-1] == -1


def test_mass_transport_small(exp1):
    out = mass_transport_check(1.0, exp1, n_windows=4000, seed=2)
    assert out["censored_fraction"] == 0.0
    for lv in out["levels"]:
        assert lv["ancestors"][0] == lv["k"]
    assert out["levels"][0]["overlap"]


def test_mass_transport_absorbing_totals(atom_model):
    out = mass_transport_check(1.0, atom_model, "tau1", n_windows=2000, seed=5, total_hops=200)
    assert out["total"]["absorbed_fraction"] == 1.0
    assert out["total"]["overlap"]


def test_paired_ci():
    m, lo, hi = paired_mean_ci([1.0, 3.0, 2.0, 2.0])
    assert m == 2.0 and lo < m < hi
    with pytest.raises(ValueError):
        paired_mean_ci([1.0, 2.0, 3.0])

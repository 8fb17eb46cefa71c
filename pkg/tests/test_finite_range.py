import math

import numpy as np
import pytest
from scipy import stats

from relay_sim import finite_range as fr
from relay_sim.blockage import density_gN
from relay_sim.heights import Uniform
from relay_sim.landscape import IntensityProfile, Landscape


def _fixed(buildings, heights, hi, rate=1e-12):
    xs, hs = zip(*buildings) if buildings else ((), ())
    return Landscape(np.array(xs, float), np.array(hs, float), 0.0, hi, IntensityProfile(rate), heights,
                     np.random.default_rng(0))


THREE = [(1, 1), (2, 3), (3, 1)]


def test_blocking_hr_examples(exp1):
    assert fr.blocking_building_hr(_fixed(THREE, exp1, 5), (0, 0), 1.5) == (1.0, 1.0)
    assert fr.blocking_building_hr(_fixed(THREE, exp1, 5), (0, 0), 3.0) == (2.0, 3.0)
    assert fr.blocking_building_hr(_fixed([], exp1, 5), (0, 0), 1.0) is fr.CEMETERY


def test_first_hop_cemetery_frequency(exp1):
    res = fr.sample_first_hop_hr(1.0, exp1, 1.0, 100_000, seed=4)
    p = np.mean(np.isnan(res["x"]))
    assert abs(p - math.exp(-1)) < 3 * math.sqrt(math.exp(-1) * (1 - math.exp(-1)) / 1e5)


def test_finite_shade():
    assert fr.finite_shade_contains((0, 0), (1, 1), (2.5, 100.0), 2.0)
    assert not fr.finite_shade_contains((0, 0), (1, 1), (1.5, 3.0), 2.0)
    # non-convexity: a high point just beyond x + R is shaded, a lower one before it is not
    assert fr.finite_shade_contains((0, 0), (1, 1), (2.01, 5.0), 2.0)
    assert not fr.finite_shade_contains((0, 0), (1, 1), (1.99, 2.5), 2.0)


def test_gNR_indicator_and_limit(exp1):
    assert fr.density_gNR(1.0, exp1, 2.0, [(0, 0), (2.5, 1)]) == 0.0
    rng = np.random.default_rng(8)
    for _ in range(20):
        n = int(rng.integers(1, 4))
        xs = np.concatenate([[0.0], np.cumsum(rng.uniform(0.2, 3.0, n))])
        hs = np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 1.0, n))])
        # make slopes nonincreasing so the infinite-range density is positive
        t = np.sort(np.diff(hs) / np.diff(xs))[::-1]
        hs = np.concatenate([[0.0], np.cumsum(t * np.diff(xs))])
        path = list(zip(xs, hs))
        a = fr.density_gNR(1.0, exp1, 1000.0, path)
        b = density_gN(1.0, exp1, path)
        assert a == pytest.approx(b, rel=1e-3)


def test_cemetery_masses(exp1):
    assert fr.cemetery_mass(1.0, exp1, 2.0, fr.FiniteState.dead()) == 1.0
    assert fr.cemetery_mass(1.0, exp1, 2.0, fr.FiniteState.start(0.0)) == pytest.approx(math.exp(-2.0))
    k = fr.kernel_VIS_R(1.0, exp1, 2.0, fr.FiniteState.dead(), fr.FiniteState.dead())
    assert k.cemetery == 1.0


def test_vis_R_normalization(exp1):
    m = fr.vis_R_total_mass(1.0, exp1, 2.0, fr.FiniteState(0.5, 1.0, 1.0), tol=1e-9)
    assert m == pytest.approx(1.0, abs=1e-6)


def test_first_hop_density_vs_mc(exp1):
    res = fr.sample_first_hop_hr(1.0, exp1, 2.0, 200_000, seed=6)
    x, h = res["x"], res["h"]
    ok = np.isfinite(x)
    st = fr.FiniteState.start(0.0)
    # probability of landing in a box around (1, 2)
    box = (x > 0.8) & (x < 1.2) & (h > 1.8) & (h < 2.2)
    from scipy import integrate

    val, _ = integrate.dblquad(lambda hh, xx: fr.hop_density(1.0, exp1, 2.0, st, xx, hh) * math.exp(-hh),
                               0.8, 1.2, 1.8, 2.2)
    n = x.size
    assert abs(box.mean() - val) < 4 * math.sqrt(val / n)
    assert ok.mean() == pytest.approx(1 - math.exp(-2), abs=4 * math.sqrt(0.12 / n))


def test_hitting_time_basics(exp1):
    rep = fr.hitting_time_report(1.0, exp1, 2.0, 100_000, seed=2)
    assert abs(rep.extra["p_zero"] - math.exp(-2)) < 3 * math.sqrt(0.135 * 0.865 / 1e5)
    half = (rep.ci95[1] - rep.ci95[0]) / 2
    assert half < 0.02 * rep.estimate
    small = fr.hitting_time_report(1.0, exp1, 0.01, 10_000, seed=2)
    assert small.estimate < 0.02


def test_hitting_time_empty_landscape(exp1):
    rng = np.random.default_rng(0)
    assert fr.hitting_time_sample(1.0, exp1, 1.0, 0.0, rng, landscape=_fixed([], exp1, 100.0)) == 0


def test_hitting_time_single_matches_batch(exp1):
    rng = np.random.default_rng(3)
    single = [fr.hitting_time_sample(1.0, exp1, 2.0, 0.0, rng) for _ in range(4000)]
    batch = fr.sample_hitting_times(1.0, exp1, 2.0, 4000, seed=3)
    assert stats.ks_2samp(single, batch).pvalue > 1e-3


def test_identity_scaling(exp1):
    for lam in (1.0, 2.0):
        a = fr.expected_zone_length_hr(lam, exp1, 2.0, 4000, seed=1)
        b = fr.direct_zone_length_hr(lam, exp1, 2.0, 4000, seed=2)
        assert a.ci95[0] <= b.ci95[1] and b.ci95[0] <= a.ci95[1]


def test_area(exp1):
    a20 = fr.expected_zone_area_hr(1.0, exp1, 2.0, 2000, seed=1, n_nodes=20)
    a40 = fr.expected_zone_area_hr(1.0, exp1, 2.0, 2000, seed=1, n_nodes=40)
    assert a20.estimate >= 0
    assert abs(a20.estimate - a40.estimate) < 0.02 * a40.estimate
    per = a20.extra["mean_T_over_lambda"]
    assert per[-1] <= per[0]


def test_range_parse():
    assert fr.RangeSpec.parse("disc:2").upper(0.0) == 2.0
    assert fr.RangeSpec.parse("rect:1,3").upper(0.5) == 3.0
    assert fr.RangeSpec.parse("horizontal:2").upper(1.0) == math.inf
    assert fr.RangeSpec.parse("disc:1").lower(0.6) == pytest.approx(-0.8)
    assert fr.RangeSpec.parse("disc:1").upper(1.5) == -math.inf
    with pytest.raises(ValueError):
        fr.RangeSpec.parse("blob:1")


def test_range_from_csv(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("a,h\n-1,0\n0,1\n1,0\n")
    rs = fr.RangeSpec.parse(f"profile:{p}")
    assert rs.upper(0.5) == pytest.approx(0.5)
    bad = tmp_path / "bad.csv"
    bad.write_text("a,h\n-1,1\n0,0\n1,1\n")
    with pytest.raises(ValueError):
        fr.RangeSpec.parse(f"profile:{bad}")


def test_stoppage_point_examples(exp1):
    disc = fr.RangeSpec.disc(1.0)
    assert fr.stoppage_point(_fixed([], exp1, 3), (0, 0), disc) == (1.0, None)
    assert fr.stoppage_point(_fixed([(0.6, 2.0)], exp1, 3), (0, 0), disc) == (0.6, 2.0)


def test_stoppage_law(exp1):
    disc = fr.RangeSpec.disc(1.0)
    assert fr.stoppage_law(1.0, exp1, (0, 0), disc, 0.0).survival == 1.0
    law = fr.stoppage_law(1.0, Uniform(1.0), (0, 0), fr.RangeSpec.rect(1.0, 5.0), 0.5)
    assert law.atom == 1.0
    from scipy import integrate

    dens = integrate.quad(lambda t: fr.stoppage_law(1.0, exp1, (0, 0), disc, t).density, 0, 1, epsabs=1e-12)[0]
    assert dens + fr.stoppage_law(1.0, exp1, (0, 0), disc, 1.0).atom == pytest.approx(1.0, abs=1e-8)


def test_stoppage_mc(exp1):
    disc = fr.RangeSpec.disc(1.0)
    xs = fr.sample_stoppage(1.0, exp1, disc, 50_000, seed=3)
    cdf = lambda t: fr.stoppage_cdf(1.0, exp1, (0, 0), disc, t)
    left = lambda t: fr.stoppage_cdf(1.0, exp1, (0, 0), disc, t, left_limit=True)
    from relay_sim.validation import ks_distance

    assert ks_distance(xs, cdf, left) < 0.02


def test_general_blocker_examples(exp1):
    disc = fr.RangeSpec.disc(2.0)
    assert fr.blocking_building_gr(_fixed([(1.0, 0.5)], exp1, 5), (0, 0), disc) == (1.0, 0.5)
    # a tall building above the range hides everything beyond its base
    land = _fixed([(0.5, 10.0), (1.0, 1.5)], exp1, 5)
    assert fr.blocking_building_gr(land, (0, 0), disc) is None
    land = _fixed([(0.3, 0.2), (0.5, 10.0), (1.0, 1.5)], exp1, 5)
    assert fr.blocking_building_gr(land, (0, 0), disc) == (0.3, 0.2)


def test_density_gR_properties(exp1):
    disc = fr.RangeSpec.disc(2.0)
    assert fr.density_gR(1.0, exp1, disc, (0, 0), (1.0, 3.0)) == 0.0
    v = fr.density_gR(1.0, exp1, disc, (0, 1.0), (1.0, 1.0))
    assert math.isfinite(v) and v > 0
    xs = np.array([0.3, 1.0, 1.7])
    hs = np.array([0.5, 1.2, 0.4])
    grid = fr.density_gR_grid(1.0, exp1, disc, (0, 0), xs, hs)
    for x, h, g in zip(xs, hs, grid):
        assert g == pytest.approx(fr.density_gR(1.0, exp1, disc, (0, 0), (x, h)), rel=1e-6)


def test_gR_normalization(exp1):
    disc = fr.RangeSpec.disc(2.0)
    mass = fr.blocker_mass_gR(1.0, exp1, disc, (0, 0), nx=12, nh=12)
    assert mass + fr.prob_no_blocker(1.0, exp1, disc) == pytest.approx(1.0, abs=1e-4)


def test_general_range_reduces_to_horizontal(exp1):
    res_h = fr.sample_first_hop_hr(1.0, exp1, 2.0, 40_000, seed=5)
    res_g = fr.sample_first_blocker_gr(1.0, exp1, fr.RangeSpec.horizontal(2.0), 40_000, seed=6)
    a, b = res_h["x"], res_g["x"]
    assert abs(np.mean(np.isnan(a)) - np.mean(np.isnan(b))) < 0.01
    assert stats.ks_2samp(a[np.isfinite(a)], b[np.isfinite(b)]).pvalue > 1e-3


def test_hitting_times_csv():
    text = fr.hitting_times_csv(np.array([0.0, 3.0]))
    assert text.splitlines() == ["rep,T", "0,0", "1,3"]

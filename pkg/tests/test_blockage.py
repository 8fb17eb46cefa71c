import math

import numpy as np
import pytest
from scipy import stats

from relay_sim.blockage import (
    ABSORBED_SELF,
    BlockState,
    SamePosition,
    Scheme,
    SchemeMismatch,
    blockage_slope,
    blocking_building,
    density_gN,
    first_hop_density,
    kernel_density_scheme,
    kernel_density_vis,
    sample_trajectories,
    shade_contains,
    trajectory,
    vis_height_cdf,
    vis_slope_cdf,
    vis_total_mass,
)
from relay_sim.landscape import IntensityProfile, Landscape


def _fixed(buildings, heights, hi=3.0, rate=1e-12):
    xs, hs = zip(*buildings)
    return Landscape(np.array(xs, float), np.array(hs, float), 0.0, hi, IntensityProfile(rate), heights,
                     np.random.default_rng(0))


def test_blocking_building_finite_argmax(exp1):
    land = _fixed([(1, 1), (2, 3), (3, 1)], exp1)
    assert blocking_building(land, (0, 0)) == (2.0, 3.0)


def test_self_absorbing_at_sup(atom_model):
    land = _fixed([(1, 0.5), (2, 1.0)], atom_model)
    assert blocking_building(land, (2.0, 1.0), Scheme.SELF_ABSORBING) is ABSORBED_SELF


@pytest.mark.parametrize("p, b, s", [((0, 0), (2, 3), 1.5), ((0, 1), (1, 1), 0.0), ((1, 2), (3, 1), -0.5)])
def test_blockage_slope(p, b, s):
    assert blockage_slope(p, b) == s


def test_blockage_slope_same_position():
    with pytest.raises(SamePosition):
        blockage_slope((1, 0), (1, 2))


def test_shade_contains():
    assert shade_contains((0, 0), (1, 1), (1, 1))
    assert not shade_contains((0, 0), (1, 1), (0.5, 0.0))
    assert shade_contains((0, 0), (1, 1), (2, 1.5))
    assert not shade_contains((0, 0), (1, 1), (2, 2.5))


def test_first_hop_ecdf_matches_marginals(exp1):
    res = sample_trajectories(1.0, exp1, 1, 100_000, seed=7)
    x, h = res["X"][:, 1], res["H"][:, 1]
    # marginal of h: size-biased tail, P(h1 <= y) = vis_height_cdf(0, y)
    assert stats.kstest(h, lambda y: vis_height_cdf(exp1, 0.0, y)).statistic < 0.02
    # first slope: 1/t1 ~ Exp(-lam G(0)) = Exp(1)
    assert stats.kstest(1.0 / res["T"][:, 1], "expon").statistic < 0.02
    assert np.all(x > 0)


def test_trajectories_monotone(exp1):
    res = sample_trajectories(1.0, exp1, 3, 20_000, seed=3)
    H, T = res["H"][:, 1:], res["T"][:, 1:]
    assert np.all(np.diff(H, axis=1) >= 0)
    assert np.all(np.diff(T, axis=1) <= 0)


def test_uniform_heights_converge_to_sup():
    from relay_sim.heights import Uniform

    res = sample_trajectories(1.0, Uniform(1.0), 20, 10_000, seed=11)
    assert np.median(res["H"][:, 20]) > 0.9


def test_slopes_go_to_zero(exp1):
    res = sample_trajectories(1.0, exp1, 30, 10_000, seed=5)
    t5, t30 = res["T"][:, 5], res["T"][:, 30]
    assert np.mean(t30) < np.mean(t5)
    assert np.mean(t30 > 0.1) < 0.1


def test_single_trajectory_matches_batch_law(exp1):
    rng = np.random.default_rng(2)
    t1 = [trajectory(1.0, exp1, n_hops=1, rng=rng)[1].t for _ in range(3000)]
    assert stats.kstest(1.0 / np.array(t1), "expon").statistic < 0.04


def test_density_gN_hand_value(exp1):
    assert density_gN(1.0, exp1, [(0, 0), (1, 2)]) == pytest.approx(math.exp(-0.5), abs=1e-14)
    assert density_gN(1.0, exp1, [(0, 0), (1, 2), (2, 1)]) == 0.0
    assert density_gN(1.0, exp1, [(0, 0), (1, 1), (2, 3)]) == 0.0
    assert first_hop_density(1.0, exp1, (0, 0), 1.0, 2.0) == pytest.approx(math.exp(-0.5))


def test_density_gN_factorizes_into_kernels(exp1):
    path = [(0, 0), (1, 2), (3, 3), (10, 4)]
    g = density_gN(1.0, exp1, path)
    g1 = first_hop_density(1.0, exp1, path[0], *path[1])
    k2 = kernel_density_vis(1.0, exp1, (2.0, 2.0), (0.5, 3.0))
    k3 = kernel_density_vis(1.0, exp1, (0.5, 3.0), (1 / 7, 4.0))
    # kernels are densities in t; convert to x through |dt/dx| = t / dx
    j2 = 0.5 / 2.0
    j3 = (1 / 7) / 7.0
    assert g == pytest.approx(g1 * k2 * j2 * k3 * j3, rel=1e-12)


def test_kernel_indicators(exp1):
    assert kernel_density_vis(1.0, exp1, (1.0, 1.0), (0.5, 0.9)) == 0.0
    assert kernel_density_vis(1.0, exp1, (1.0, 1.0), (1.5, 2.0)) == 0.0


def test_vis_normalization(exp1):
    assert vis_total_mass(1.0, exp1, 1.0, 1.0) == pytest.approx(1.0, abs=1e-6)


def test_vis_slope_cdf_is_cdf(exp1):
    s = np.linspace(0.01, 2.0, 50)
    F = vis_slope_cdf(1.0, exp1, 2.0, 0.5, s)
    assert np.all(np.diff(F) >= 0) and F[-1] == 1.0


def test_scheme_kernels(atom_model):
    at_top = BlockState(3.0, 1.0, 0.2)
    atom = kernel_density_scheme(1.0, atom_model, "tau1", at_top)
    assert atom.kind == "atom" and atom.value == 1.0 and atom.position == 3.0
    hop = kernel_density_scheme(1.0, atom_model, "tau2", at_top, (5.0, 1.0))
    assert hop.value == pytest.approx(0.2 * math.exp(-0.4))
    below = BlockState(0.0, 0.3, 2.0)
    v = kernel_density_scheme(1.0, atom_model, "tau2", below, (1.0, 0.8))
    assert v.value == kernel_density_vis(1.0, atom_model, (2.0, 0.3), (0.5, 0.8))
    with pytest.raises(SchemeMismatch):
        kernel_density_scheme(1.0, atom_model, "tau", at_top)


def test_next_max_hop_length_mean(atom_model):
    res = sample_trajectories(1.0, atom_model, 60, 4000, seed=9, scheme="next_max")
    X, H = res["X"], res["H"]
    gaps = []
    for r in range(X.shape[0]):
        top = np.flatnonzero(H[r] >= 1.0)
        if top.size >= 2:
            gaps.extend(np.diff(X[r, top]))
    gaps = np.array(gaps)
    assert gaps.size > 10_000
    assert abs(gaps.mean() - 5.0) < 3 * gaps.std() / math.sqrt(gaps.size)


def test_trajectory_reproducible(exp1):
    a = sample_trajectories(1.0, exp1, 4, 5000, seed=1, workers=1)
    b = sample_trajectories(1.0, exp1, 4, 5000, seed=1, workers=2)
    for k in a:
        assert np.array_equal(a[k], b[k])
